use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::design::{match_units, DesignConfig};
use crate::error::{Error, Result};
use crate::model::{ComplianceClass, MatchedDesign, PotentialOutcomes, PotentialTable, Unit};
use crate::seed::replicate_rng;

/// Distribution of the observed dose.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DoseScenario {
    /// `Z ~ U[5, 50]`, independent of covariates.
    Randomized,
    /// `Z = 4 X2 + 6 X3 + U[0, 2]`.
    CovariateDependent,
}

impl DoseScenario {
    fn stream(self) -> u64 {
        match self {
            DoseScenario::Randomized => 0,
            DoseScenario::CovariateDependent => 1,
        }
    }
}

/// Unit-level effect of treatment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EffectScenario {
    /// `U[4, 6]` for everyone; `(K0, K1) = (4, 6)`.
    Independent,
    /// `U[2, 5]` compliers, `U[4, 6]` always-takers, `U[1, 3]` never-takers;
    /// `(K0, K1) = (1, 6)`.
    ComplianceDependent,
}

impl EffectScenario {
    pub fn k_bounds(self) -> (f64, f64) {
        match self {
            EffectScenario::Independent => (4.0, 6.0),
            EffectScenario::ComplianceDependent => (1.0, 6.0),
        }
    }

    fn effect(self, class: ComplianceClass, psi: f64, u: f64) -> f64 {
        match self {
            EffectScenario::Independent => psi,
            EffectScenario::ComplianceDependent => {
                let (lo, hi) = match class {
                    ComplianceClass::Complier => (2.0, 5.0),
                    ComplianceClass::AlwaysTaker => (4.0, 6.0),
                    ComplianceClass::NeverTaker => (1.0, 3.0),
                };
                lo + (hi - lo) * u
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Study1Config {
    /// Participants per replicate; must be even.
    pub n: usize,
    pub replicates: usize,
    pub seed: u64,
    /// Dose-gap calipers in minutes; `None` matches on covariates alone.
    pub calipers: Vec<Option<f64>>,
    /// Penalty per minute of dose-gap shortfall below the caliper.
    pub dose_penalty: f64,
    pub dose_scenarios: Vec<DoseScenario>,
    pub effect_scenarios: Vec<EffectScenario>,
}

impl Default for Study1Config {
    fn default() -> Self {
        Study1Config {
            n: 1000,
            replicates: 200,
            seed: 20240501,
            calipers: vec![None, Some(7.0), Some(15.0)],
            dose_penalty: 0.3,
            dose_scenarios: vec![DoseScenario::Randomized, DoseScenario::CovariateDependent],
            effect_scenarios: vec![EffectScenario::Independent, EffectScenario::ComplianceDependent],
        }
    }
}

impl Study1Config {
    pub fn check(&self) -> Result<()> {
        if self.n < 4 || self.n % 2 == 1 {
            return Err(Error::InvalidArgument(format!("n must be even and at least 4, got {}", self.n)));
        }
        if self.replicates == 0 {
            return Err(Error::InvalidArgument("replicates must be positive".into()));
        }
        if self.calipers.is_empty() || self.dose_scenarios.is_empty() || self.effect_scenarios.is_empty() {
            return Err(Error::InvalidArgument("every factor needs at least one level".into()));
        }
        if self.calipers.iter().flatten().any(|c| !(c.is_finite() && *c > 0.0)) {
            return Err(Error::InvalidArgument("calipers must be finite and positive".into()));
        }
        if !(self.dose_penalty.is_finite() && self.dose_penalty > 0.0) {
            return Err(Error::InvalidArgument("dose_penalty must be finite and positive".into()));
        }
        Ok(())
    }

    fn design_config(&self, caliper: Option<f64>) -> DesignConfig {
        match caliper {
            Some(c) => DesignConfig::with_dose_caliper(c, self.dose_penalty),
            None => DesignConfig::default(),
        }
    }
}

/// One simulated cohort before matching.
#[derive(Debug, Clone, PartialEq)]
pub struct Study1Population {
    /// Ids are `u0, u1, ...`; `treated = 1{dose > threshold}`; outcomes are
    /// filled in once pairs, and hence compliance classes, are known.
    pub units: Vec<Unit>,
    pub thresholds: Vec<f64>,
    pub r_d0: Vec<f64>,
    /// Effect draw for the compliance-independent scenario.
    pub psi: Vec<f64>,
    /// Uniform on `[0, 1]` mapped onto the class-specific effect range.
    pub effect_u: Vec<f64>,
}

pub fn gen_study1_population<R: Rng + ?Sized>(
    n: usize,
    dose: DoseScenario,
    rng: &mut R,
) -> Study1Population {
    let std = Normal::new(0.0, 1.0).expect("valid normal");
    let x2 = Normal::new(2.0, libm::sqrt(5.0)).expect("valid normal");
    let u = |a: f64, b: f64| Uniform::new_inclusive(a, b).expect("valid range");
    let (x3d, x4d, td, z1d, phid, psid, unit) =
        (u(1.0, 3.0), u(-2.0, 0.0), u(20.0, 30.0), u(5.0, 50.0), u(0.0, 2.0), u(4.0, 6.0), u(0.0, 1.0));
    let mut pop = Study1Population {
        units: Vec::with_capacity(n),
        thresholds: Vec::with_capacity(n),
        r_d0: Vec::with_capacity(n),
        psi: Vec::with_capacity(n),
        effect_u: Vec::with_capacity(n),
    };
    for k in 0..n {
        let x = vec![
            std.sample(rng),
            x2.sample(rng),
            x3d.sample(rng),
            x4d.sample(rng),
            if rng.random::<f64>() < 0.5 { 1.0 } else { 0.0 },
        ];
        let t = td.sample(rng);
        let z = match dose {
            DoseScenario::Randomized => z1d.sample(rng),
            DoseScenario::CovariateDependent => 4.0 * x[1] + 6.0 * x[2] + phid.sample(rng),
        };
        pop.units.push(Unit {
            id: format!("u{k}"),
            x,
            dose: z,
            treated: z > t,
            outcome: 0.0,
            exact_keys: Vec::new(),
        });
        pop.thresholds.push(t);
        pop.r_d0.push(std.sample(rng));
        pop.psi.push(psid.sample(rng));
        pop.effect_u.push(unit.sample(rng));
    }
    pop
}

impl Study1Population {
    fn index(&self) -> BTreeMap<&str, usize> {
        self.units.iter().enumerate().map(|(k, u)| (u.id.as_str(), k)).collect()
    }

    /// Potential outcomes of a matched design under `effect`, and the design
    /// with observed outcomes filled in.
    pub fn realize(&self, design: &MatchedDesign, effect: EffectScenario) -> (MatchedDesign, PotentialTable) {
        let index = self.index();
        let mut out = design.clone();
        let mut table = PotentialTable { pairs: Vec::with_capacity(design.n_pairs()) };
        for pair in &mut out.pairs {
            let (lo, hi) = (pair.near.dose, pair.far.dose);
            let po = |id: &str| {
                let k = index[id];
                let t = self.thresholds[k];
                let class = ComplianceClass::from_treatments(hi > t, lo > t)
                    .expect("step functions are monotone in the dose");
                let r1 = self.r_d0[k] + effect.effect(class, self.psi[k], self.effect_u[k]);
                PotentialOutcomes::from_class(class, self.r_d0[k], r1)
            };
            let near = po(&pair.near.id);
            let far = po(&pair.far.id);
            debug_assert_eq!(pair.far.treated, far.d_t);
            debug_assert_eq!(pair.near.treated, near.d_c);
            pair.near.outcome = near.r_c;
            pair.far.outcome = far.r_t;
            table.pairs.push([near, far]);
        }
        (out, table)
    }
}

/// Bound widths of one replicate: `widths[c][e]` for caliper `c` and effect
/// scenario `e` of `config`, and the matched designs per caliper.
pub fn study1_replicate(
    config: &Study1Config,
    dose: DoseScenario,
    rep: usize,
) -> Result<(Vec<Vec<f64>>, Vec<MatchedDesign>)> {
    config.check()?;
    let mut rng = replicate_rng(config.seed, (dose.stream() << 32) | rep as u64);
    let pop = gen_study1_population(config.n, dose, &mut rng);
    let mut widths = Vec::with_capacity(config.calipers.len());
    let mut designs = Vec::with_capacity(config.calipers.len());
    for &cal in &config.calipers {
        let (design, _) = match_units(&pop.units, None, &config.design_config(cal))?;
        let row = config
            .effect_scenarios
            .iter()
            .map(|&e| {
                let (_, table) = pop.realize(&design, e);
                let (k0, k1) = e.k_bounds();
                let (lb, ub) = table.bounds(k0, k1);
                ub - lb
            })
            .collect();
        widths.push(row);
        designs.push(design);
    }
    Ok((widths, designs))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Study1Row {
    pub dose: DoseScenario,
    pub effect: EffectScenario,
    /// Mean width per caliper, in the order of [`Study1Table::calipers`].
    pub mean_widths: Vec<f64>,
    pub sd_widths: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Study1Table {
    pub calipers: Vec<Option<f64>>,
    pub n: usize,
    pub replicates: usize,
    pub seed: u64,
    pub rows: Vec<Study1Row>,
}

impl Study1Table {
    pub fn row(&self, dose: DoseScenario, effect: EffectScenario) -> Option<&Study1Row> {
        self.rows.iter().find(|r| r.dose == dose && r.effect == effect)
    }

    /// Aggregates per-replicate widths `reps[d][r][c][e]` for dose scenario
    /// `d` and replicate `r`, in replicate order.
    pub fn from_replicates(config: &Study1Config, reps: &[Vec<Vec<Vec<f64>>>]) -> Self {
        let mut rows = Vec::new();
        for (d, &dose) in config.dose_scenarios.iter().enumerate() {
            for (e, &effect) in config.effect_scenarios.iter().enumerate() {
                let (mut mean_widths, mut sd_widths) = (Vec::new(), Vec::new());
                for c in 0..config.calipers.len() {
                    let vals: Vec<f64> = reps[d].iter().map(|w| w[c][e]).collect();
                    let (m, s) = super::summarize(&vals);
                    mean_widths.push(m);
                    sd_widths.push(s);
                }
                rows.push(Study1Row { dose, effect, mean_widths, sd_widths });
            }
        }
        Study1Table {
            calipers: config.calipers.clone(),
            n: config.n,
            replicates: config.replicates,
            seed: config.seed,
            rows,
        }
    }
}

/// Mean bound widths for every dose scenario, effect scenario and caliper.
/// Effect scenarios and calipers of one replicate share the cohort.
pub fn run_study1(config: &Study1Config) -> Result<Study1Table> {
    config.check()?;
    let mut reps = Vec::with_capacity(config.dose_scenarios.len());
    for &dose in &config.dose_scenarios {
        let mut per = Vec::with_capacity(config.replicates);
        for r in 0..config.replicates {
            per.push(study1_replicate(config, dose, r)?.0);
        }
        reps.push(per);
    }
    Ok(Study1Table::from_replicates(config, &reps))
}
