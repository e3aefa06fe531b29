//! Point estimates, randomization tests and confidence limits for the
//! partial identification bounds and the effect ratio.
//!
//! Throughout, `tau_i(K) = (R_far - R_near) - K (D_far - D_near)` is the
//! encouraged-minus-unencouraged difference in pair `i`.

mod biased;
mod ratio;
mod regression;

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::MatchedDesign;
use crate::stats::{mean, normal_cdf, normal_quantile, normal_sf};

pub use biased::{
    biased_tau, biased_test_bound, biased_upper_test, ci_bounds_biased, gamma_from_gamma_cap,
    gamma_from_max_gap, lower_limit_biased, SensitivityModel,
};
pub use ratio::{effect_ratio_inference, effect_ratio_test, EffectRatioResult};
pub use regression::{default_pair_covariates, regression_assisted_variance, RegressionVariance};

/// Per-pair differences for one constant `K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairStatistics {
    pub k: f64,
    pub tau: Vec<f64>,
    pub dose_gap: Vec<f64>,
}

impl PairStatistics {
    pub fn from_design(design: &MatchedDesign, k: f64) -> Self {
        let tau = design
            .pairs
            .iter()
            .map(|p| p.outcome_difference() - k * p.treatment_difference())
            .collect();
        PairStatistics {
            k,
            tau,
            dose_gap: design.dose_gaps(),
        }
    }

    pub fn len(&self) -> usize {
        self.tau.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau.is_empty()
    }

    pub fn mean(&self) -> f64 {
        mean(&self.tau)
    }

    /// `S^2 = sum (tau_i - mean)^2 / (I (I - 1))`.
    pub fn variance(&self) -> Result<f64> {
        mean_variance(&self.tau)
    }
}

/// Variance estimate of a sample mean; zero spread is an error.
pub(crate) fn mean_variance(xs: &[f64]) -> Result<f64> {
    let i = xs.len();
    if i < 2 {
        return Err(Error::InsufficientData("need at least two pairs".into()));
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    if ss == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok(ss / (i as f64 * (i as f64 - 1.0)))
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(alloc::format!(
            "alpha must lie in (0, 1), got {alpha}"
        )))
    }
}

fn check_k(k0: f64, k1: f64) -> Result<()> {
    if !k0.is_finite() || !k1.is_finite() || k0 > k1 {
        return Err(Error::InvalidArgument(alloc::format!(
            "need finite K0 <= K1, got ({k0}, {k1})"
        )));
    }
    Ok(())
}

fn require_pairs(design: &MatchedDesign) -> Result<()> {
    if design.pairs.is_empty() {
        Err(Error::InsufficientData("design has no pairs".into()))
    } else {
        Ok(())
    }
}

/// Estimated compliance rate: mean of `D_far - D_near`.
pub fn compliance_rate_hat(design: &MatchedDesign) -> Result<f64> {
    require_pairs(design)?;
    let diffs: Vec<f64> = design.pairs.iter().map(|p| p.treatment_difference()).collect();
    Ok(mean(&diffs))
}

/// Estimated intention-to-treat effect: mean of `R_far - R_near`.
pub fn itt_hat(design: &MatchedDesign) -> Result<f64> {
    require_pairs(design)?;
    let diffs: Vec<f64> = design.pairs.iter().map(|p| p.outcome_difference()).collect();
    Ok(mean(&diffs))
}

/// Plug-in `(LB, UB)` estimates.
pub fn bounds_point(design: &MatchedDesign, k0: f64, k1: f64) -> Result<(f64, f64)> {
    check_k(k0, k1)?;
    let itt = itt_hat(design)?;
    let iota = compliance_rate_hat(design)?;
    Ok((itt - k0 * iota + k0, itt - k1 * iota + k1))
}

/// Alternative hypothesis of a bound test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    TwoSided,
    /// The bound exceeds the hypothesized value.
    Greater,
    /// The bound is below the hypothesized value.
    Less,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    /// `T(l; K) = mean(tau) - (l - K)`.
    pub statistic: f64,
    pub variance: f64,
    pub reject: bool,
    pub p_value: f64,
}

fn normal_test(statistic: f64, variance: f64, alpha: f64, side: Side) -> TestResult {
    let se = libm::sqrt(variance);
    let z = statistic / se;
    let (reject, p_value) = match side {
        Side::TwoSided => (
            statistic.abs() >= normal_quantile(1.0 - alpha / 2.0) * se,
            (2.0 * normal_sf(z.abs())).min(1.0),
        ),
        Side::Greater => (statistic >= normal_quantile(1.0 - alpha) * se, normal_sf(z)),
        Side::Less => (-statistic >= normal_quantile(1.0 - alpha) * se, normal_cdf(z)),
    };
    TestResult {
        statistic,
        variance,
        reject,
        p_value,
    }
}

/// Randomization test of `H0: bound = l` where the bound uses constant `k`
/// (`K0` for the lower bound, `K1` for the upper one).
pub fn test_bound_randomization(
    design: &MatchedDesign,
    l: f64,
    k: f64,
    alpha: f64,
    side: Side,
) -> Result<TestResult> {
    check_alpha(alpha)?;
    let stats = PairStatistics::from_design(design, k);
    let variance = stats.variance()?;
    Ok(normal_test(stats.mean() - (l - k), variance, alpha, side))
}

/// How the confidence limits were obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Method {
    Randomization,
    Biased { gamma: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub n_pairs: usize,
    pub iota_hat: f64,
    pub itt_hat: f64,
    pub lb_hat: f64,
    pub ub_hat: f64,
    /// Lower end of the level-`alpha` interval for `[LB, UB]`.
    pub lb_lower: f64,
    /// Upper end of the level-`alpha` interval for `[LB, UB]`.
    pub ub_upper: f64,
    /// One-sided level-`alpha` lower confidence limit for `LB` alone.
    pub lb_lower_one_sided: f64,
    pub method: Method,
    pub k0: f64,
    pub k1: f64,
    pub alpha: f64,
}

/// One-sided level-`alpha` lower limit for `LB` under randomization.
pub fn lower_limit_randomization(design: &MatchedDesign, k0: f64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let stats = PairStatistics::from_design(design, k0);
    let s2 = stats.variance()?;
    Ok(stats.mean() + k0 - normal_quantile(1.0 - alpha) * libm::sqrt(s2))
}

/// Interval for `[LB, UB]` from two one-sided level-`alpha / 2` limits.
pub fn ci_bounds_randomization(
    design: &MatchedDesign,
    k0: f64,
    k1: f64,
    alpha: f64,
) -> Result<BoundsReport> {
    check_alpha(alpha)?;
    let (lb_hat, ub_hat) = bounds_point(design, k0, k1)?;
    let s2_0 = PairStatistics::from_design(design, k0).variance()?;
    let s2_1 = PairStatistics::from_design(design, k1).variance()?;
    let z2 = normal_quantile(1.0 - alpha / 2.0);
    let z1 = normal_quantile(1.0 - alpha);
    Ok(BoundsReport {
        n_pairs: design.n_pairs(),
        iota_hat: compliance_rate_hat(design)?,
        itt_hat: itt_hat(design)?,
        lb_hat,
        ub_hat,
        lb_lower: lb_hat - z2 * libm::sqrt(s2_0),
        ub_upper: ub_hat + z2 * libm::sqrt(s2_1),
        lb_lower_one_sided: lb_hat - z1 * libm::sqrt(s2_0),
        method: Method::Randomization,
        k0,
        k1,
        alpha,
    })
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;
    use crate::model::{MatchedPair, Unit};
    use alloc::format;
    use alloc::vec;

    /// Pairs given as `((R_far, D_far), (R_near, D_near), gap)`.
    pub fn design(pairs: &[((f64, bool), (f64, bool), f64)]) -> MatchedDesign {
        let ps = pairs
            .iter()
            .enumerate()
            .map(|(i, &((rf, df), (rn, dn), gap))| {
                let near = Unit::new(format!("n{i}"), vec![0.0], 0.0, dn, rn).unwrap();
                let far = Unit::new(format!("f{i}"), vec![0.0], gap, df, rf).unwrap();
                MatchedPair::new(near, far).unwrap()
            })
            .collect();
        MatchedDesign::from_pairs(ps)
    }
}
