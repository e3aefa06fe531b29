//! Declarative pipeline configuration with environment overrides.

use std::path::{Path, PathBuf};

use ivmatch_core::design::DesignConfig;
use ivmatch_core::sim::{Study1Config, Study2Config};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::ingest::Schema;

/// Prefix of environment variables overriding config keys. Nested keys
/// are joined with `__`, e.g. `IVMATCH_INFERENCE__ALPHA=0.1`.
pub const ENV_PREFIX: &str = "IVMATCH_";

pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Source of all randomness in the pipeline. When set it also replaces
    /// the simulation seeds.
    pub seed: Option<u64>,
    pub input: Option<PathBuf>,
    pub output: PathBuf,
    pub schema: Schema,
    pub design: DesignConfig,
    pub template: TemplateSettings,
    pub inference: InferenceSettings,
    pub diagnostics: DiagnosticsSettings,
    pub simulate: SimulateSettings,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: None,
            input: None,
            output: PathBuf::from("out"),
            schema: Schema::default(),
            design: DesignConfig::default(),
            template: TemplateSettings::default(),
            inference: InferenceSettings::default(),
            diagnostics: DiagnosticsSettings::default(),
            simulate: SimulateSettings::default(),
        }
    }
}

/// Template source: an external file, or a seeded sample of the input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TemplateSettings {
    pub path: Option<PathBuf>,
    /// Share of input rows sampled without replacement when `path` is
    /// unset. Zero disables template matching.
    pub fraction: f64,
}

impl Default for TemplateSettings {
    fn default() -> Self {
        TemplateSettings { path: None, fraction: 0.10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CmpOp {
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "==")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
}

impl CmpOp {
    pub fn eval(self, a: f64, b: f64) -> bool {
        match self {
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
            CmpOp::Gt => a > b,
            CmpOp::Ge => a >= b,
            CmpOp::Eq => a == b,
            CmpOp::Ne => a != b,
        }
    }
}

/// `covariate op value`; one-hot columns are named `column=level`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Predicate {
    pub covariate: String,
    pub op: CmpOp,
    pub value: f64,
}

/// Pairs whose members both satisfy every predicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Subgroup {
    pub name: String,
    #[serde(rename = "where", default)]
    pub predicates: Vec<Predicate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceSettings {
    pub k0: f64,
    pub k1: f64,
    /// Upper-bound constants for the sweep files; empty skips the sweep.
    pub k1_grid: Vec<f64>,
    /// Dose-scaled sensitivity parameter.
    pub gamma: f64,
    /// Odds cap translated into `gamma` via the largest dose gap; takes
    /// precedence over `gamma`.
    pub gamma_cap: Option<f64>,
    pub alpha: f64,
    pub effect_ratio: bool,
    pub subgroups: Vec<Subgroup>,
}

impl Default for InferenceSettings {
    fn default() -> Self {
        InferenceSettings {
            k0: 0.0,
            k1: 1.0,
            k1_grid: Vec::new(),
            gamma: 0.0,
            gamma_cap: None,
            alpha: 0.05,
            effect_ratio: true,
            subgroups: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsSettings {
    pub n_perm: usize,
    pub n_splits: usize,
    pub alpha: f64,
    pub gamma_cap_search: bool,
    /// Odds bounds at which the biased permutation test is reported.
    pub biased_gamma: Vec<f64>,
}

impl Default for DiagnosticsSettings {
    fn default() -> Self {
        DiagnosticsSettings {
            n_perm: 999,
            n_splits: 5,
            alpha: 0.05,
            gamma_cap_search: false,
            biased_gamma: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSettings {
    pub study1: Study1Config,
    pub study2: Study2Config,
    /// Dose pool for the second study; the bundled synthetic pool if unset.
    pub dose_pool: Option<PathBuf>,
}

fn check_alpha(name: &str, alpha: f64) -> CliResult<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(CliError::Config(format!("{name} must lie in (0, 1), got {alpha}")))
    }
}

impl PipelineConfig {
    /// Reads `path`, applies environment overrides and resolves relative
    /// paths against the file's directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        if !path.exists() {
            return Err(CliError::MissingInput(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, std::env::vars(), base)
    }

    /// Parses `text` with overrides taken from `env`.
    pub fn from_toml(
        text: &str,
        env: impl IntoIterator<Item = (String, String)>,
        base: &Path,
    ) -> CliResult<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        apply_env(&mut table, env)?;
        let mut cfg: PipelineConfig =
            toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        cfg.resolve(base);
        if cfg.design.exact_match.is_empty() {
            cfg.design.exact_match = cfg.schema.exact.clone();
        } else if cfg.design.exact_match != cfg.schema.exact {
            return Err(CliError::Config("design.exact_match must name the schema's exact columns".into()));
        }
        cfg.check()?;
        Ok(cfg)
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = self.input.as_mut() {
            fix(p);
        }
        if let Some(p) = self.template.path.as_mut() {
            fix(p);
        }
        if let Some(p) = self.simulate.dose_pool.as_mut() {
            fix(p);
        }
        fix(&mut self.output);
    }

    pub fn check(&self) -> CliResult<()> {
        let inf = &self.inference;
        check_alpha("inference.alpha", inf.alpha)?;
        check_alpha("diagnostics.alpha", self.diagnostics.alpha)?;
        if !(inf.k0.is_finite() && inf.k1.is_finite() && inf.k0 <= inf.k1) {
            return Err(CliError::Config(format!("need finite k0 <= k1, got {} and {}", inf.k0, inf.k1)));
        }
        if let Some(k) = inf.k1_grid.iter().find(|k| !(k.is_finite() && **k >= inf.k0)) {
            return Err(CliError::Config(format!("k1_grid value {k} is below k0 or not finite")));
        }
        if !(inf.gamma.is_finite() && inf.gamma >= 0.0) {
            return Err(CliError::Config(format!("gamma must be finite and non-negative, got {}", inf.gamma)));
        }
        if !(0.0..1.0).contains(&self.template.fraction) {
            return Err(CliError::Config(format!("template.fraction must lie in [0, 1), got {}", self.template.fraction)));
        }
        let mut names = std::collections::HashSet::new();
        for g in &inf.subgroups {
            if g.name == "all" || !names.insert(g.name.as_str()) {
                return Err(CliError::Config(format!("subgroup name {:?} is reserved or repeated", g.name)));
            }
        }
        self.design.check()?;
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    /// The input path, or a usage error when none is configured.
    pub fn input_path(&self) -> CliResult<&Path> {
        self.input
            .as_deref()
            .ok_or_else(|| CliError::Config("no `input` file configured".into()))
    }
}

/// Sets `table[a][b]...` from every `IVMATCH_A__B...` variable. Values are
/// read as TOML literals, falling back to plain strings.
pub fn apply_env(table: &mut toml::Table, env: impl IntoIterator<Item = (String, String)>) -> CliResult<()> {
    let mut vars: Vec<(String, String)> = env
        .into_iter()
        .filter(|(k, _)| k.starts_with(ENV_PREFIX) && k.len() > ENV_PREFIX.len())
        .collect();
    vars.sort();
    for (key, raw) in vars {
        let path: Vec<String> = key[ENV_PREFIX.len()..].split("__").map(|s| s.to_ascii_lowercase()).collect();
        let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or(toml::Value::String(raw));
        let (last, parents) = path.split_last().expect("non-empty key");
        let mut cur = &mut *table;
        for p in parents {
            let entry = cur
                .entry(p.clone())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            cur = match entry {
                toml::Value::Table(t) => t,
                _ => return Err(CliError::Config(format!("{key}: {p} is not a table"))),
            };
        }
        cur.insert(last.clone(), value);
    }
    Ok(())
}
