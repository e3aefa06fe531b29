use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{
    bounds_point, check_alpha, compliance_rate_hat, itt_hat, mean_variance, normal_test,
    BoundsReport, Method, PairStatistics, Side, TestResult,
};
use crate::error::{Error, Result};
use crate::model::MatchedDesign;
use crate::stats::{mean, normal_quantile};

/// Dose-dependent biased assignment: within pair `i` the odds of the
/// observed dose ordering are at most `Gamma_i = exp(gamma * gap_i)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityModel {
    pub gamma: f64,
}

impl SensitivityModel {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma >= 0.0) || !gamma.is_finite() {
            return Err(Error::InvalidArgument(alloc::format!(
                "gamma must be finite and non-negative, got {gamma}"
            )));
        }
        Ok(SensitivityModel { gamma })
    }

    #[inline]
    pub fn odds(&self, gap: f64) -> f64 {
        libm::exp(self.gamma * gap)
    }

    pub fn pair_odds(&self, design: &MatchedDesign) -> Vec<f64> {
        design.pairs.iter().map(|p| self.odds(p.dose_gap)).collect()
    }
}

/// Worst-case rescaled pair difference under odds `big_gamma`.
///
/// Positive differences shrink by `(G + 1) / (2 G)` and negative ones grow
/// by `(G + 1) / 2`. `G = 1` returns `tau` unchanged.
#[inline]
pub fn biased_tau(tau: f64, big_gamma: f64) -> f64 {
    if big_gamma == 1.0 {
        return tau;
    }
    (big_gamma + 1.0) / (4.0 * big_gamma)
        * ((big_gamma + 1.0) * tau - (big_gamma - 1.0) * tau.abs())
}

fn biased_values(tau: &[f64], odds: &[f64], sign: f64) -> Vec<f64> {
    tau.iter()
        .zip(odds)
        .map(|(&t, &g)| biased_tau(sign * t, g))
        .collect()
}

/// One-sided test of `H0: LB = l` against `LB > l` under the biased model;
/// `statistic` is `mean(tau_Gamma) - (l - k)`.
pub fn biased_test_bound(
    design: &MatchedDesign,
    l: f64,
    k: f64,
    gamma: f64,
    alpha: f64,
) -> Result<TestResult> {
    check_alpha(alpha)?;
    let model = SensitivityModel::new(gamma)?;
    let stats = PairStatistics::from_design(design, k);
    let vals = biased_values(&stats.tau, &model.pair_odds(design), 1.0);
    let variance = mean_variance(&vals)?;
    Ok(normal_test(mean(&vals) - (l - k), variance, alpha, Side::Greater))
}

/// Mirror test of `H0: UB = u` against `UB < u`, applying the rescaling to
/// the negated differences; `statistic` is `mean((-tau)_Gamma) + (u - k)`.
pub fn biased_upper_test(
    design: &MatchedDesign,
    u: f64,
    k: f64,
    gamma: f64,
    alpha: f64,
) -> Result<TestResult> {
    check_alpha(alpha)?;
    let model = SensitivityModel::new(gamma)?;
    let stats = PairStatistics::from_design(design, k);
    let vals = biased_values(&stats.tau, &model.pair_odds(design), -1.0);
    let variance = mean_variance(&vals)?;
    Ok(normal_test(mean(&vals) + (u - k), variance, alpha, Side::Greater))
}

/// Inverts the one-sided biased test: the smallest `l` not rejected.
fn lower_limit(design: &MatchedDesign, k: f64, model: SensitivityModel, z: f64) -> Result<f64> {
    let stats = PairStatistics::from_design(design, k);
    let vals = biased_values(&stats.tau, &model.pair_odds(design), 1.0);
    let s2 = mean_variance(&vals)?;
    Ok(k + mean(&vals) - z * libm::sqrt(s2))
}

fn upper_limit(design: &MatchedDesign, k: f64, model: SensitivityModel, z: f64) -> Result<f64> {
    let stats = PairStatistics::from_design(design, k);
    let vals = biased_values(&stats.tau, &model.pair_odds(design), -1.0);
    let s2 = mean_variance(&vals)?;
    Ok(k - (mean(&vals) - z * libm::sqrt(s2)))
}

/// One-sided level-`alpha` lower limit for `LB` under the biased model.
pub fn lower_limit_biased(design: &MatchedDesign, k0: f64, gamma: f64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    lower_limit(design, k0, SensitivityModel::new(gamma)?, normal_quantile(1.0 - alpha))
}

/// Interval for `[LB, UB]` under the biased model from two one-sided
/// level-`alpha / 2` limits.
pub fn ci_bounds_biased(
    design: &MatchedDesign,
    k0: f64,
    k1: f64,
    gamma: f64,
    alpha: f64,
) -> Result<BoundsReport> {
    check_alpha(alpha)?;
    let model = SensitivityModel::new(gamma)?;
    let (lb_hat, ub_hat) = bounds_point(design, k0, k1)?;
    let z2 = normal_quantile(1.0 - alpha / 2.0);
    Ok(BoundsReport {
        n_pairs: design.n_pairs(),
        iota_hat: compliance_rate_hat(design)?,
        itt_hat: itt_hat(design)?,
        lb_hat,
        ub_hat,
        lb_lower: lower_limit(design, k0, model, z2)?,
        ub_upper: upper_limit(design, k1, model, z2)?,
        lb_lower_one_sided: lower_limit(design, k0, model, normal_quantile(1.0 - alpha))?,
        method: Method::Biased { gamma },
        k0,
        k1,
        alpha,
    })
}

/// `gamma = ln(Gamma_cap) / max gap`.
pub fn gamma_from_max_gap(gamma_cap: f64, max_gap: f64) -> Result<f64> {
    if !(gamma_cap >= 1.0) || !gamma_cap.is_finite() {
        return Err(Error::InvalidArgument(alloc::format!(
            "odds cap must be finite and at least 1, got {gamma_cap}"
        )));
    }
    if !(max_gap > 0.0) {
        return Err(Error::AllZeroGaps);
    }
    Ok(libm::log(gamma_cap) / max_gap)
}

/// Translates a uniform odds cap into the dose-scaled `gamma` whose largest
/// pair odds equal the cap.
pub fn gamma_from_gamma_cap(gamma_cap: f64, design: &MatchedDesign) -> Result<f64> {
    let max_gap = design.pairs.iter().fold(0.0f64, |m, p| m.max(p.dose_gap));
    gamma_from_max_gap(gamma_cap, max_gap)
}
