use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use super::DosePool;
use crate::error::{Error, Result};
use crate::inference::{lower_limit_biased, lower_limit_randomization, PairStatistics};
use crate::model::{
    ComplianceClass, MatchedDesign, MatchedPair, PotentialOutcomes, PotentialTable, Unit,
};
use crate::seed::{mix, replicate_rng};
use crate::stats::expit;

/// How the probability `pi` that the favoured member receives the larger
/// dose is drawn, given the pair odds `G = exp(gamma * gap)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mechanism {
    /// `pi ~ U[1/2, G / (1 + G)]`.
    I = 0,
    /// `pi = G / (1 + G)`, the worst case.
    II = 1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutcomeType {
    Continuous,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Study2Config {
    /// Numbers of pairs `I`.
    pub pairs: Vec<usize>,
    pub gammas: Vec<f64>,
    pub mechanisms: Vec<Mechanism>,
    pub outcomes: Vec<OutcomeType>,
    /// 1: no effect of treatment. 2: heterogeneous effects.
    pub scenarios: Vec<u8>,
    pub replicates: usize,
    pub seed: u64,
    /// Rate in the never-taker weight `exp(-never_taker_alpha * larger dose)`.
    pub never_taker_alpha: f64,
    /// One-sided level of the lower confidence limits.
    pub alpha: f64,
}

impl Default for Study2Config {
    fn default() -> Self {
        Study2Config {
            pairs: vec![100, 500, 1000, 2000],
            gammas: vec![0.0, 0.025, 0.05],
            mechanisms: vec![Mechanism::I, Mechanism::II],
            outcomes: vec![OutcomeType::Continuous],
            scenarios: vec![1, 2],
            replicates: 200,
            seed: 20240502,
            never_taker_alpha: 0.05,
            alpha: 0.05,
        }
    }
}

/// One cell of the second study's grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Study2Cell {
    pub mechanism: Mechanism,
    pub outcome: OutcomeType,
    pub scenario: u8,
    pub pairs: usize,
    pub gamma: f64,
    pub never_taker_alpha: f64,
}

impl Study2Cell {
    pub fn check(&self) -> Result<()> {
        if !(self.scenario == 1 || self.scenario == 2) {
            return Err(Error::InvalidArgument(format!("scenario must be 1 or 2, got {}", self.scenario)));
        }
        if self.pairs < 2 {
            return Err(Error::InvalidArgument("need at least two pairs".into()));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidArgument(format!("gamma must be finite and >= 0, got {}", self.gamma)));
        }
        if !(self.never_taker_alpha >= 0.0 && self.never_taker_alpha.is_finite()) {
            return Err(Error::InvalidArgument("never_taker_alpha must be finite and >= 0".into()));
        }
        Ok(())
    }

    /// `(K0, K1)`: `(0, 0)` without effects, `(-1, 1)` otherwise.
    pub fn k_bounds(&self) -> (f64, f64) {
        if self.scenario == 1 {
            (0.0, 0.0)
        } else {
            (-1.0, 1.0)
        }
    }

    /// At `gamma = 0` both mechanisms are the same fair assignment, so they
    /// share a stream and hence the simulated data.
    fn stream(&self) -> u64 {
        let mechanism = if self.gamma == 0.0 { 0 } else { self.mechanism as u64 };
        mix(&[
            mechanism,
            self.outcome as u64,
            self.scenario as u64,
            self.pairs as u64,
            self.gamma.to_bits(),
        ])
    }
}

impl Study2Config {
    pub fn check(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::InvalidArgument("replicates must be positive".into()));
        }
        crate::inference::check_alpha(self.alpha)?;
        if self.pairs.is_empty()
            || self.gammas.is_empty()
            || self.mechanisms.is_empty()
            || self.outcomes.is_empty()
            || self.scenarios.is_empty()
        {
            return Err(Error::InvalidArgument("every factor needs at least one level".into()));
        }
        self.cells().iter().try_for_each(Study2Cell::check)
    }

    /// Grid cells ordered by mechanism, outcome, scenario, `I`, then `gamma`.
    pub fn cells(&self) -> Vec<Study2Cell> {
        let mut out = Vec::new();
        for &mechanism in &self.mechanisms {
            for &outcome in &self.outcomes {
                for &scenario in &self.scenarios {
                    for &pairs in &self.pairs {
                        for &gamma in &self.gammas {
                            out.push(Study2Cell {
                                mechanism,
                                outcome,
                                scenario,
                                pairs,
                                gamma,
                                never_taker_alpha: self.never_taker_alpha,
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

/// One simulated matched sample with its potential outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct Study2Sample {
    pub design: MatchedDesign,
    /// Aligned with `design`: `[near, far]` per pair.
    pub table: PotentialTable,
    /// Population lower bound for the cell's `K0`.
    pub lb0: f64,
    pub k0: f64,
    pub k1: f64,
}

fn draw_class<R: Rng + ?Sized>(rng: &mut R, gap: f64, hi: f64, alpha_nt: f64) -> ComplianceClass {
    let w_c = 1.0;
    let w_a = libm::exp(-0.2 * gap);
    let w_n = libm::exp(-alpha_nt * hi);
    let u = rng.random::<f64>() * (w_c + w_a + w_n);
    if u < w_c {
        ComplianceClass::Complier
    } else if u < w_c + w_a {
        ComplianceClass::AlwaysTaker
    } else {
        ComplianceClass::NeverTaker
    }
}

fn draw_outcomes<R: Rng + ?Sized>(rng: &mut R, cell: &Study2Cell) -> (f64, f64) {
    let tau = || Uniform::new_inclusive(-1.0, 1.0).expect("valid range");
    match cell.outcome {
        OutcomeType::Continuous => {
            let r0: f64 = Normal::new(0.0, 1.0).expect("valid normal").sample(rng);
            let r1 = if cell.scenario == 1 { r0 } else { r0 + tau().sample(rng) };
            (r0, r1)
        }
        OutcomeType::Binary => {
            let bern = |rng: &mut R, p: f64| if rng.random::<f64>() < p { 1.0 } else { 0.0 };
            let r0 = bern(rng, expit(0.5));
            let r1 = if cell.scenario == 1 {
                r0
            } else {
                let t = tau().sample(rng);
                bern(rng, expit(0.5 + t))
            };
            (r0, r1)
        }
    }
}

/// Draws `cell.pairs` pairs: doses with replacement from `pool`, classes
/// and potential outcomes per unit, then the dose assignment.
///
/// Within a pair the member with the larger `r_{d=0}` (the first member on
/// ties) is favoured: it receives the larger dose with probability `pi`.
pub fn gen_study2_pairs<R: Rng + ?Sized>(
    cell: &Study2Cell,
    pool: &DosePool,
    rng: &mut R,
) -> Result<Study2Sample> {
    cell.check()?;
    if pool.is_empty() {
        return Err(Error::MissingDosePool);
    }
    let (k0, k1) = cell.k_bounds();
    let mut pairs = Vec::with_capacity(cell.pairs);
    let mut table = PotentialTable { pairs: Vec::with_capacity(cell.pairs) };
    for i in 0..cell.pairs {
        let a = pool.doses[rng.random_range(0..pool.len())];
        let b = pool.doses[rng.random_range(0..pool.len())];
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let gap = hi - lo;
        let members: [PotentialOutcomes; 2] = core::array::from_fn(|_| {
            let class = draw_class(rng, gap, hi, cell.never_taker_alpha);
            let (r0, r1) = draw_outcomes(rng, cell);
            PotentialOutcomes::from_class(class, r0, r1)
        });
        let favoured = if members[1].r_d0 > members[0].r_d0 { 1 } else { 0 };
        let odds = libm::exp(cell.gamma * gap);
        let top = odds / (1.0 + odds);
        let pi = match cell.mechanism {
            Mechanism::I => {
                if top > 0.5 {
                    rng.random_range(0.5..=top)
                } else {
                    0.5
                }
            }
            Mechanism::II => top,
        };
        let far = if rng.random::<f64>() < pi { favoured } else { 1 - favoured };
        let near = 1 - far;
        let (pf, pn) = (members[far], members[near]);
        let unit = |j: usize, dose: f64, d: bool, r: f64| Unit {
            id: format!("p{i}m{j}"),
            x: Vec::new(),
            dose,
            treated: d,
            outcome: r,
            exact_keys: Vec::new(),
        };
        pairs.push(MatchedPair {
            near: unit(near, lo, pn.d_c, pn.r_c),
            far: unit(far, hi, pf.d_t, pf.r_t),
            dose_gap: gap,
        });
        table.pairs.push([pn, pf]);
    }
    let lb0 = table.bounds(k0, k1).0;
    Ok(Study2Sample {
        design: MatchedDesign::from_pairs(pairs),
        table,
        lb0,
        k0,
        k1,
    })
}

/// Exact variance of `sqrt(I) * T` over the uniform assignment of the
/// larger dose within pairs, with potential outcomes held fixed.
pub fn oracle_variance(table: &PotentialTable, k: f64) -> f64 {
    let i = table.pairs.len() as f64;
    let tau = |far: &PotentialOutcomes, near: &PotentialOutcomes| {
        (far.r_t - near.r_c) - k * ((far.d_t as u8 as f64) - (near.d_c as u8 as f64))
    };
    table
        .pairs
        .iter()
        .map(|[a, b]| {
            let d = tau(b, a) - tau(a, b);
            d * d / 4.0
        })
        .sum::<f64>()
        / i
}

/// Coverage indicators of one replicate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicateCoverage {
    pub lb0: f64,
    pub randomization: Option<bool>,
    pub biased: Option<bool>,
    /// `I * S^2` at `K0`.
    pub scaled_variance: Option<f64>,
    /// Exact uniform-assignment variance of `sqrt(I) * T` at `K0`.
    pub oracle_variance: f64,
}

/// Runs replicate `rep` of `cell`. A limit that cannot be computed (zero
/// variance) is recorded as `None`.
pub fn study2_replicate(
    cell: &Study2Cell,
    pool: &DosePool,
    seed: u64,
    rep: usize,
    alpha: f64,
) -> Result<ReplicateCoverage> {
    let mut rng = replicate_rng(seed, cell.stream() ^ ((rep as u64) << 1));
    let s = gen_study2_pairs(cell, pool, &mut rng)?;
    let stats = PairStatistics::from_design(&s.design, s.k0);
    let rand = lower_limit_randomization(&s.design, s.k0, alpha).ok();
    let biased = lower_limit_biased(&s.design, s.k0, cell.gamma, alpha).ok();
    Ok(ReplicateCoverage {
        lb0: s.lb0,
        randomization: rand.map(|l| l <= s.lb0),
        biased: biased.map(|l| l <= s.lb0),
        scaled_variance: stats.variance().ok().map(|v| v * stats.len() as f64),
        oracle_variance: oracle_variance(&s.table, s.k0),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Study2Row {
    pub cell: Study2Cell,
    pub coverage_randomization: f64,
    pub coverage_biased: f64,
    /// Fraction of replicates where `I * S^2` is at least the oracle variance.
    pub conservative_variance_rate: f64,
    /// Replicates where a limit could not be computed (excluded).
    pub failed: usize,
    pub replicates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Study2Table {
    pub seed: u64,
    pub alpha: f64,
    pub rows: Vec<Study2Row>,
}

impl Study2Table {
    pub fn find(&self, mechanism: Mechanism, outcome: OutcomeType, scenario: u8, pairs: usize, gamma: f64) -> Option<&Study2Row> {
        self.rows.iter().find(|r| {
            let c = &r.cell;
            c.mechanism == mechanism
                && c.outcome == outcome
                && c.scenario == scenario
                && c.pairs == pairs
                && c.gamma == gamma
        })
    }
}

impl Study2Row {
    /// Aggregates replicate results given in replicate order.
    pub fn from_replicates(cell: Study2Cell, reps: &[ReplicateCoverage]) -> Self {
        let rate = |f: &dyn Fn(&ReplicateCoverage) -> Option<bool>| {
            let vals: Vec<bool> = reps.iter().filter_map(f).collect();
            vals.iter().filter(|&&b| b).count() as f64 / vals.len().max(1) as f64
        };
        let failed = reps
            .iter()
            .filter(|r| r.randomization.is_none() || r.biased.is_none())
            .count();
        Study2Row {
            cell,
            coverage_randomization: rate(&|r| r.randomization),
            coverage_biased: rate(&|r| r.biased),
            conservative_variance_rate: rate(&|r| r.scaled_variance.map(|v| v >= r.oracle_variance)),
            failed,
            replicates: reps.len(),
        }
    }
}

/// Coverage of the one-sided randomization and biased lower limits for
/// `LB` on every cell of the grid.
pub fn run_study2(config: &Study2Config, pool: &DosePool) -> Result<Study2Table> {
    config.check()?;
    let mut rows = Vec::new();
    for cell in config.cells() {
        let reps = (0..config.replicates)
            .map(|r| study2_replicate(&cell, pool, config.seed, r, config.alpha))
            .collect::<Result<Vec<_>>>()?;
        rows.push(Study2Row::from_replicates(cell, &reps));
    }
    Ok(Study2Table {
        seed: config.seed,
        alpha: config.alpha,
        rows,
    })
}
