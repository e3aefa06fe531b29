//! The four subcommands. Each reads its inputs, writes artifacts into the
//! output directory and returns a short summary.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use ivmatch_core::design::match_units;
use ivmatch_core::diagnostics::{
    balance_table, biased_cpt, compliance_summary, cpt, format_balance_table, gamma_cap_search,
};
use ivmatch_core::inference::{
    ci_bounds_biased, ci_bounds_randomization, effect_ratio_inference, gamma_from_gamma_cap,
    BoundsReport, EffectRatioResult,
};
use ivmatch_core::seed::replicate_rng;
use ivmatch_core::sim::{
    study1_replicate, study2_replicate, DosePool, Study1Config, Study1Table, Study2Config, Study2Row,
    Study2Table,
};
use ivmatch_core::model::DesignReport;
use ivmatch_core::{validate_design, MatchedDesign, Template, TemplateUnit, Unit};
use serde::{Deserialize, Serialize};

use crate::config::{PipelineConfig, Subgroup};
use crate::error::{CliError, CliResult};
use crate::ingest::{load_dose_pool, load_template, load_units, Cohort};
use crate::output::{digest_file, ensure_dir, num, read_json, slug, write_csv, write_json, write_text, InputDigest};
use crate::parallel::par_map;

/// Stream of the generator that samples template rows from the input.
const TEMPLATE_STREAM: u64 = 0x7465_6d70;

pub const DESIGN_FILE: &str = "design.json";

/// Everything a command needs besides its own arguments.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: PipelineConfig,
    /// The file the configuration came from, hashed into manifests.
    pub config_path: Option<PathBuf>,
    pub threads: usize,
}

impl Context {
    pub fn out_dir(&self) -> &Path {
        &self.config.output
    }

    fn out(&self, name: &str) -> PathBuf {
        self.config.output.join(name)
    }

    fn load_design(&self) -> CliResult<MatchedDesign> {
        read_json(&self.out(DESIGN_FILE))
    }
}

// ---------------------------------------------------------------- match

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProvenanceFile {
    pub n_pairs: usize,
    pub n_eliminated: usize,
    pub template_source: String,
    pub provenance: ivmatch_core::Provenance,
    pub warnings: Vec<String>,
    pub invariants: DesignReport,
}

/// Template sampled without replacement from the cohort's covariate rows.
pub fn sample_template(cohort: &Cohort, fraction: f64, seed: u64) -> Template {
    let n = cohort.units.len();
    let m = ((fraction * n as f64).round() as usize).min(n);
    let mut rng = replicate_rng(seed, TEMPLATE_STREAM);
    let mut idx = rand::seq::index::sample(&mut rng, n, m).into_vec();
    idx.sort_unstable();
    Template::new(
        idx.into_iter()
            .map(|i| TemplateUnit { id: format!("t:{}", cohort.units[i].id), x: cohort.units[i].x.clone() })
            .collect(),
    )
}

pub fn cmd_match(ctx: &Context) -> CliResult<ProvenanceFile> {
    let cfg = &ctx.config;
    let cohort = load_units(cfg.input_path()?, &cfg.schema)?;
    let (template, source) = match (&cfg.template.path, cfg.template.fraction) {
        (Some(p), _) => (Some(load_template(p, &cfg.schema, &cohort)?), p.display().to_string()),
        (None, f) if f > 0.0 => (
            Some(sample_template(&cohort, f, cfg.seed())),
            format!("sampled {f} of input rows"),
        ),
        _ => (None, "none".to_string()),
    };
    let (mut design, warnings) = match_units(&cohort.units, template.as_ref(), &cfg.design)?;
    design.provenance.seed = Some(cfg.seed());
    design.provenance.covariate_names = cohort.covariate_names.clone();

    ensure_dir(ctx.out_dir())?;
    let pair_rows: Vec<Vec<String>> = design
        .pairs
        .iter()
        .enumerate()
        .map(|(i, p)| {
            vec![
                i.to_string(),
                p.near.id.clone(),
                p.far.id.clone(),
                num(p.near.dose),
                num(p.far.dose),
                num(p.dose_gap),
            ]
        })
        .collect();
    write_csv(&ctx.out("pairs.csv"), &["pair", "near_id", "far_id", "near_dose", "far_dose", "dose_gap"], &pair_rows)?;
    let elim_rows: Vec<Vec<String>> =
        design.eliminated.iter().map(|u| vec![u.id.clone(), num(u.dose)]).collect();
    write_csv(&ctx.out("eliminated.csv"), &["id", "dose"], &elim_rows)?;
    let prov = ProvenanceFile {
        n_pairs: design.n_pairs(),
        n_eliminated: design.eliminated.len(),
        template_source: source,
        provenance: design.provenance.clone(),
        warnings,
        invariants: validate_design(&design),
    };
    write_json(&ctx.out("provenance.json"), &prov)?;
    write_json(&ctx.out(DESIGN_FILE), &design)?;
    Ok(prov)
}

// ------------------------------------------------------------- diagnose

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnoseSummary {
    pub cpt_p_value: f64,
    pub max_smd: f64,
    pub biased: Vec<(f64, f64)>,
    pub gamma_cap: Option<ivmatch_core::diagnostics::GammaCapResult>,
}

pub fn cmd_diagnose(ctx: &Context) -> CliResult<DiagnoseSummary> {
    let cfg = &ctx.config;
    let diag = &cfg.diagnostics;
    let design = ctx.load_design()?;
    ensure_dir(ctx.out_dir())?;

    let rows = balance_table(&design, &design.provenance.covariate_names)?;
    let csv_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![r.name.clone(), num(r.near_mean), num(r.far_mean), num(r.smd), num(r.sd), r.flagged.to_string()])
        .collect();
    write_csv(&ctx.out("balance.csv"), &["covariate", "near_mean", "far_mean", "abs_smd", "reference_sd", "flagged"], &csv_rows)?;
    write_text(&ctx.out("balance.txt"), &format_balance_table(&rows))?;
    write_json(&ctx.out("compliance.json"), &compliance_summary(&design)?)?;

    let plain = cpt(&design, diag.n_perm, cfg.seed())?;
    write_json(&ctx.out("cpt.json"), &plain)?;

    let mut biased = Vec::new();
    let mut biased_results = Vec::new();
    for &g in &diag.biased_gamma {
        let r = biased_cpt(&design, g, diag.n_perm, diag.n_splits, cfg.seed())?;
        biased.push((g, r.p_value));
        biased_results.push(r);
    }
    if !biased_results.is_empty() {
        write_json(&ctx.out("biased_cpt.json"), &biased_results)?;
    }

    let gamma_cap = if diag.gamma_cap_search {
        let r = gamma_cap_search(&design, diag.alpha, diag.n_perm, diag.n_splits, cfg.seed())?;
        write_json(&ctx.out("gamma_cap.json"), &r)?;
        Some(r)
    } else {
        None
    };
    let max_smd = rows.iter().filter(|r| r.name != "dose").map(|r| r.smd).fold(0.0, f64::max);
    Ok(DiagnoseSummary { cpt_p_value: plain.p_value, max_smd, biased, gamma_cap })
}

// ---------------------------------------------------------------- infer

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferEntry {
    pub outcome: String,
    pub subgroup: String,
    pub n_pairs: usize,
    /// Pairs with one member inside the subgroup, excluded from it.
    pub mixed_pairs_excluded: usize,
    pub randomization: Option<BoundsReport>,
    pub biased: Option<BoundsReport>,
    /// Infinite interval ends are written as `null`.
    pub effect_ratio: Option<EffectRatioResult>,
    pub errors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skipped {
    pub outcome: String,
    pub subgroup: String,
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferReport {
    pub k0: f64,
    pub k1: f64,
    pub gamma: f64,
    pub gamma_cap: Option<f64>,
    pub alpha: f64,
    pub entries: Vec<InferEntry>,
    pub skipped: Vec<Skipped>,
    /// Sweep files written, relative to the output directory.
    pub sweeps: Vec<String>,
}

fn subgroup_filter<'a>(g: &'a Subgroup, names: &[String]) -> CliResult<impl Fn(&Unit) -> bool + 'a> {
    let cols = g
        .predicates
        .iter()
        .map(|p| {
            names.iter().position(|n| *n == p.covariate).ok_or_else(|| {
                CliError::Config(format!("subgroup {:?}: unknown covariate {:?}", g.name, p.covariate))
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    Ok(move |u: &Unit| g.predicates.iter().zip(&cols).all(|(p, &c)| p.op.eval(u.x[c], p.value)))
}

/// Copies of `design` carrying each configured outcome.
fn designs_by_outcome(ctx: &Context, design: &MatchedDesign) -> CliResult<Vec<(String, MatchedDesign)>> {
    let names = &ctx.config.schema.outcomes;
    if names.len() <= 1 {
        let name = names.first().cloned().unwrap_or_else(|| "outcome".into());
        return Ok(vec![(name, design.clone())]);
    }
    let cohort = load_units(ctx.config.input_path()?, &ctx.config.schema)?;
    let index: HashMap<&str, usize> = cohort.units.iter().enumerate().map(|(i, u)| (u.id.as_str(), i)).collect();
    let mut out = Vec::new();
    for (k, name) in names.iter().enumerate() {
        let mut d = design.clone();
        for p in &mut d.pairs {
            for u in [&mut p.near, &mut p.far] {
                let i = *index
                    .get(u.id.as_str())
                    .ok_or_else(|| CliError::Config(format!("unit {} of the design is not in the input", u.id)))?;
                u.outcome = cohort.outcome_values[k][i];
            }
        }
        out.push((name.clone(), d));
    }
    Ok(out)
}

pub fn cmd_infer(ctx: &Context) -> CliResult<InferReport> {
    let inf = &ctx.config.inference;
    let design = ctx.load_design()?;
    let gamma = match inf.gamma_cap {
        Some(cap) => gamma_from_gamma_cap(cap, &design)?,
        None => inf.gamma,
    };
    let names = design.provenance.covariate_names.clone();
    let mut groups: Vec<(String, Option<&Subgroup>)> = vec![("all".into(), None)];
    groups.extend(inf.subgroups.iter().map(|g| (g.name.clone(), Some(g))));
    ensure_dir(ctx.out_dir())?;

    let mut report = InferReport {
        k0: inf.k0,
        k1: inf.k1,
        gamma,
        gamma_cap: inf.gamma_cap,
        alpha: inf.alpha,
        entries: Vec::new(),
        skipped: Vec::new(),
        sweeps: Vec::new(),
    };
    for (outcome, od) in designs_by_outcome(ctx, &design)? {
        for (gname, g) in &groups {
            let (sub, mixed) = match g {
                Some(g) => od.subset_pairs(subgroup_filter(g, &names)?),
                None => (od.clone(), 0),
            };
            if sub.pairs.is_empty() {
                let e = CliError::EmptySubgroup(gname.clone());
                eprintln!("warning: {e}; skipped");
                report.skipped.push(Skipped {
                    outcome: outcome.clone(),
                    subgroup: gname.clone(),
                    kind: e.kind().into(),
                    message: e.to_string(),
                });
                continue;
            }
            let mut errors = Vec::new();
            let randomization = keep(&mut errors, ci_bounds_randomization(&sub, inf.k0, inf.k1, inf.alpha));
            let biased = if gamma > 0.0 {
                keep(&mut errors, ci_bounds_biased(&sub, inf.k0, inf.k1, gamma, inf.alpha))
            } else {
                None
            };
            let effect_ratio = if inf.effect_ratio {
                keep(&mut errors, effect_ratio_inference(&sub, gamma, inf.alpha))
            } else {
                None
            };

            if !inf.k1_grid.is_empty() {
                let file = format!("sweep_{}_{}.csv", slug(&outcome), slug(gname));
                write_sweep(&ctx.out(&file), &sub, inf.k0, &inf.k1_grid, gamma, inf.alpha)?;
                report.sweeps.push(file);
            }
            report.entries.push(InferEntry {
                outcome: outcome.clone(),
                subgroup: gname.clone(),
                n_pairs: sub.n_pairs(),
                mixed_pairs_excluded: mixed,
                randomization,
                biased,
                effect_ratio,
                errors,
            });
        }
    }
    write_json(&ctx.out("infer.json"), &report)?;
    Ok(report)
}

/// Records a failed analysis in `errors` instead of aborting the run.
fn keep<T>(errors: &mut Vec<String>, r: ivmatch_core::Result<T>) -> Option<T> {
    r.map_err(|e| errors.push(e.to_string())).ok()
}

/// Bounds and interval ends across `K1`, one row per grid value.
fn write_sweep(path: &Path, design: &MatchedDesign, k0: f64, grid: &[f64], gamma: f64, alpha: f64) -> CliResult<()> {
    let method = if gamma > 0.0 { "biased" } else { "randomization" };
    let rows = grid
        .iter()
        .map(|&k1| {
            let r = if gamma > 0.0 {
                ci_bounds_biased(design, k0, k1, gamma, alpha)
            } else {
                ci_bounds_randomization(design, k0, k1, alpha)
            }?;
            Ok(vec![num(k1), num(r.lb_hat), num(r.ub_hat), num(r.lb_lower), num(r.ub_upper), method.to_string()])
        })
        .collect::<CliResult<Vec<_>>>()?;
    write_csv(path, &["k1", "lb_hat", "ub_hat", "lb_lower", "ub_upper", "method"], &rows)
}

// ------------------------------------------------------------- simulate

#[derive(Debug, Clone, PartialEq, Serialize)]
struct Manifest<'a, C: Serialize> {
    study: u8,
    version: &'static str,
    full_scale: bool,
    config: &'a C,
    inputs: Vec<InputDigest>,
}

pub const FULL_SCALE_REPLICATES: usize = 1000;

fn input_digests(ctx: &Context, extra: Option<&Path>) -> CliResult<Vec<InputDigest>> {
    ctx.config_path.iter().map(|p| p.as_path()).chain(extra).map(digest_file).collect()
}

pub fn study1_config(ctx: &Context, full_scale: bool) -> Study1Config {
    let mut c = ctx.config.simulate.study1.clone();
    if full_scale {
        c.replicates = FULL_SCALE_REPLICATES;
    }
    if let Some(s) = ctx.config.seed {
        c.seed = s;
    }
    c
}

pub fn study2_config(ctx: &Context, full_scale: bool) -> Study2Config {
    let mut c = ctx.config.simulate.study2.clone();
    if full_scale {
        c.replicates = FULL_SCALE_REPLICATES;
    }
    if let Some(s) = ctx.config.seed {
        c.seed = s;
    }
    c
}

/// Replicates of every dose scenario, spread over `threads` workers.
pub fn run_study1_parallel(config: &Study1Config, threads: usize) -> CliResult<Study1Table> {
    config.check()?;
    let r = config.replicates;
    let flat = par_map(config.dose_scenarios.len() * r, threads, |i| {
        study1_replicate(config, config.dose_scenarios[i / r], i % r).map(|x| x.0)
    });
    let flat = flat.into_iter().collect::<Result<Vec<_>, _>>()?;
    let reps: Vec<Vec<_>> = flat.chunks(r).map(|c| c.to_vec()).collect();
    Ok(Study1Table::from_replicates(config, &reps))
}

pub fn run_study2_parallel(config: &Study2Config, pool: &DosePool, threads: usize) -> CliResult<Study2Table> {
    config.check()?;
    let cells = config.cells();
    let r = config.replicates;
    let flat = par_map(cells.len() * r, threads, |i| {
        study2_replicate(&cells[i / r], pool, config.seed, i % r, config.alpha)
    });
    let flat = flat.into_iter().collect::<Result<Vec<_>, _>>()?;
    let rows = cells
        .iter()
        .zip(flat.chunks(r))
        .map(|(cell, reps)| Study2Row::from_replicates(*cell, reps))
        .collect();
    Ok(Study2Table { seed: config.seed, alpha: config.alpha, rows })
}

fn caliper_label(c: Option<f64>) -> String {
    c.map_or_else(|| "none".into(), |c| format!("{c}"))
}

pub fn table2_rows(table: &Study1Table) -> (Vec<String>, Vec<Vec<String>>) {
    let mut header = vec!["dose".to_string(), "effect".to_string()];
    header.extend(table.calipers.iter().map(|&c| format!("width_caliper_{}", caliper_label(c))));
    header.extend(table.calipers.iter().map(|&c| format!("sd_caliper_{}", caliper_label(c))));
    let rows = table
        .rows
        .iter()
        .map(|row| {
            let mut r = vec![label(&row.dose), label(&row.effect)];
            r.extend(row.mean_widths.iter().map(|&w| num(w)));
            r.extend(row.sd_widths.iter().map(|&w| num(w)));
            r
        })
        .collect();
    (header, rows)
}

pub fn table3_rows(table: &Study2Table) -> (Vec<&'static str>, Vec<Vec<String>>) {
    let header = vec![
        "mechanism",
        "outcome",
        "scenario",
        "pairs",
        "gamma",
        "coverage_randomization",
        "coverage_biased",
        "conservative_variance_rate",
        "failed",
        "replicates",
    ];
    let rows = table
        .rows
        .iter()
        .map(|row| {
            let c = &row.cell;
            vec![
                label(&c.mechanism),
                label(&c.outcome),
                c.scenario.to_string(),
                c.pairs.to_string(),
                num(c.gamma),
                num(row.coverage_randomization),
                num(row.coverage_biased),
                num(row.conservative_variance_rate),
                row.failed.to_string(),
                row.replicates.to_string(),
            ]
        })
        .collect();
    (header, rows)
}

/// Serde name of a unit enum variant.
fn label<T: Serialize>(v: &T) -> String {
    match serde_json::to_value(v) {
        Ok(serde_json::Value::String(s)) => s,
        Ok(v) => v.to_string(),
        Err(_) => String::new(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum SimulationTable {
    Study1(Study1Table),
    Study2(Study2Table),
}

pub fn cmd_simulate(ctx: &Context, study: u8, full_scale: bool) -> CliResult<SimulationTable> {
    ensure_dir(ctx.out_dir())?;
    match study {
        1 => {
            let config = study1_config(ctx, full_scale);
            let table = run_study1_parallel(&config, ctx.threads)?;
            let (header, rows) = table2_rows(&table);
            let header: Vec<&str> = header.iter().map(String::as_str).collect();
            write_csv(&ctx.out("table2.csv"), &header, &rows)?;
            write_json(&ctx.out("table2.json"), &table)?;
            let manifest = Manifest {
                study,
                version: env!("CARGO_PKG_VERSION"),
                full_scale,
                config: &config,
                inputs: input_digests(ctx, None)?,
            };
            write_json(&ctx.out("manifest.json"), &manifest)?;
            Ok(SimulationTable::Study1(table))
        }
        2 => {
            let config = study2_config(ctx, full_scale);
            let pool_path = ctx.config.simulate.dose_pool.as_deref();
            let pool = match pool_path {
                Some(p) => DosePool::new(load_dose_pool(p)?)?,
                None => DosePool::synthetic(),
            };
            let table = run_study2_parallel(&config, &pool, ctx.threads)?;
            let (header, rows) = table3_rows(&table);
            write_csv(&ctx.out("table3.csv"), &header, &rows)?;
            write_json(&ctx.out("table3.json"), &table)?;
            let manifest = Manifest {
                study,
                version: env!("CARGO_PKG_VERSION"),
                full_scale,
                config: &config,
                inputs: input_digests(ctx, pool_path)?,
            };
            write_json(&ctx.out("manifest.json"), &manifest)?;
            Ok(SimulationTable::Study2(table))
        }
        s => Err(CliError::Config(format!("unknown study {s}; expected 1 or 2"))),
    }
}
