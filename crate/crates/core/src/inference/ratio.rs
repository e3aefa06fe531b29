use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::biased::{biased_tau, SensitivityModel};
use super::{check_alpha, normal_test, Side, TestResult};
use crate::error::{Error, Result};
use crate::model::MatchedDesign;
use crate::stats::normal_quantile;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectRatioResult {
    pub lambda_hat: f64,
    /// May be `-inf` when the data cannot exclude arbitrarily small ratios.
    pub lower: f64,
    /// May be `+inf`.
    pub upper: f64,
    pub gamma: f64,
    pub alpha: f64,
}

/// Pair data for the effect-ratio test: `tau_i(l) = a_i - l b_i`.
struct RatioData {
    a: Vec<f64>,
    b: Vec<f64>,
    odds: Vec<f64>,
}

impl RatioData {
    fn new(design: &MatchedDesign, model: SensitivityModel) -> Result<Self> {
        if design.n_pairs() < 2 {
            return Err(Error::InsufficientData("need at least two pairs".into()));
        }
        let a: Vec<f64> = design.pairs.iter().map(|p| p.outcome_difference()).collect();
        let b: Vec<f64> = design.pairs.iter().map(|p| p.treatment_difference()).collect();
        if b.iter().sum::<f64>() == 0.0 {
            return Err(Error::ZeroDenominator);
        }
        Ok(RatioData {
            a,
            b,
            odds: model.pair_odds(design),
        })
    }

    fn lambda_hat(&self) -> f64 {
        self.a.iter().sum::<f64>() / self.b.iter().sum::<f64>()
    }

    /// Mean and variance of the rescaled differences at `lambda`, with the
    /// differences negated when `sign` is -1. Zero variance is allowed.
    fn moments(&self, lambda: f64, sign: f64) -> (f64, f64) {
        let i = self.a.len() as f64;
        let vals = self
            .a
            .iter()
            .zip(&self.b)
            .zip(&self.odds)
            .map(|((&a, &b), &g)| biased_tau(sign * (a - lambda * b), g));
        let (mut s, mut ss) = (0.0, 0.0);
        let mut n = 0.0;
        // Welford update for a stable variance.
        for v in vals {
            n += 1.0;
            let d = v - s;
            s += d / n;
            ss += d * (v - s);
        }
        (s, ss / (i * (i - 1.0)))
    }

    /// Non-negative exactly when the one-sided test at `lambda` rejects.
    fn margin(&self, lambda: f64, sign: f64, z: f64) -> f64 {
        let (m, v) = self.moments(lambda, sign);
        m - z * libm::sqrt(v)
    }

    /// Points where some pair difference changes sign and the rescaling
    /// changes slope.
    fn kinks(&self) -> Vec<f64> {
        let mut k: Vec<f64> = self
            .a
            .iter()
            .zip(&self.b)
            .zip(&self.odds)
            .filter(|((_, &b), &g)| b != 0.0 && g != 1.0)
            .map(|((&a, &b), _)| a / b)
            .collect();
        k.sort_by(f64::total_cmp);
        k.dedup();
        k
    }
}

/// Locates the first point moving from `x0` in direction `dir` where
/// `f >= 0`. `f` is concave between consecutive `breaks` (sorted along
/// `dir`, all beyond `x0`). Returns `None` if `f` stays negative.
fn first_crossing(f: impl Fn(f64) -> f64, x0: f64, dir: f64, breaks: &[f64]) -> Option<f64> {
    if f(x0) >= 0.0 {
        return Some(x0);
    }
    let mut s = x0;
    for &e in breaks {
        if let Some(x) = crossing_in_segment(&f, s, e) {
            return Some(x);
        }
        s = e;
    }
    // Unbounded tail: concave, so once it decreases it keeps decreasing.
    let mut step = libm::fmax(1.0, s.abs());
    let (mut prev2, mut prev) = (s, s);
    let mut f_prev = f(s);
    for _ in 0..1100 {
        let x = s + dir * step;
        if !x.is_finite() {
            break;
        }
        let fx = f(x);
        if fx >= 0.0 {
            return Some(bisect(&f, prev, x));
        }
        if fx < f_prev {
            return crossing_in_segment(&f, prev2, x);
        }
        prev2 = prev;
        prev = x;
        f_prev = fx;
        step *= 2.0;
    }
    None
}

/// Crossing inside `[s, e]` (either order) given `f(s) < 0` and `f`
/// concave on the segment.
fn crossing_in_segment(f: &impl Fn(f64) -> f64, s: f64, e: f64) -> Option<f64> {
    if f(e) >= 0.0 {
        return Some(bisect(f, s, e));
    }
    let (x, fx) = golden_max(f, s, e);
    (fx >= 0.0).then(|| bisect(f, s, x))
}

/// Boundary between `lo` (negative side) and `hi` (non-negative side),
/// returned on the negative side.
fn bisect(f: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if f(mid) >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    lo
}

fn golden_max(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut lo, mut hi) = (a, b);
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..120 {
        if f1 >= 0.0 {
            return (x1, f1);
        }
        if f2 >= 0.0 {
            return (x2, f2);
        }
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        }
    }
    if f1 > f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Test of `H0: lambda = lambda0` under the biased model. `Greater` rejects
/// for large ratios, `Less` for small ones, and `TwoSided` combines both at
/// `alpha / 2` each.
pub fn effect_ratio_test(
    design: &MatchedDesign,
    lambda0: f64,
    gamma: f64,
    alpha: f64,
    side: Side,
) -> Result<TestResult> {
    check_alpha(alpha)?;
    let data = RatioData::new(design, SensitivityModel::new(gamma)?)?;
    let one_sided = |sign: f64, level: f64| -> Result<TestResult> {
        let (m, v) = data.moments(lambda0, sign);
        if v == 0.0 {
            return Err(Error::ZeroVariance);
        }
        Ok(normal_test(m, v, level, Side::Greater))
    };
    match side {
        Side::Greater => one_sided(1.0, alpha),
        Side::Less => one_sided(-1.0, alpha),
        Side::TwoSided => {
            let g = one_sided(1.0, alpha / 2.0)?;
            let l = one_sided(-1.0, alpha / 2.0)?;
            Ok(TestResult {
                statistic: g.statistic,
                variance: g.variance,
                reject: g.reject || l.reject,
                p_value: (2.0 * g.p_value.min(l.p_value)).min(1.0),
            })
        }
    }
}

/// Point estimate and level-`alpha` interval for the effect ratio, found by
/// inverting the two one-sided `alpha / 2` tests around the estimate.
pub fn effect_ratio_inference(
    design: &MatchedDesign,
    gamma: f64,
    alpha: f64,
) -> Result<EffectRatioResult> {
    check_alpha(alpha)?;
    let data = RatioData::new(design, SensitivityModel::new(gamma)?)?;
    let lambda_hat = data.lambda_hat();
    let z = normal_quantile(1.0 - alpha / 2.0);
    let kinks = data.kinks();
    let below: Vec<f64> = kinks.iter().rev().copied().filter(|&k| k < lambda_hat).collect();
    let above: Vec<f64> = kinks.iter().copied().filter(|&k| k > lambda_hat).collect();

    let reach = |dir: f64, breaks: &[f64]| -> f64 {
        let hits = [1.0, -1.0]
            .map(|sign| first_crossing(|l| data.margin(l, sign, z), lambda_hat, dir, breaks));
        hits.iter()
            .flatten()
            .copied()
            .fold(dir * f64::INFINITY, |best, x| if dir * x < dir * best { x } else { best })
    };
    Ok(EffectRatioResult {
        lambda_hat,
        lower: reach(-1.0, &below),
        upper: reach(1.0, &above),
        gamma,
        alpha,
    })
}
