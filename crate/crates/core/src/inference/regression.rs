use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::PairStatistics;
use crate::error::{Error, Result};
use crate::model::MatchedDesign;

/// Leverage at or above `1 - LEVERAGE_TOL` is rejected.
const LEVERAGE_TOL: f64 = 1e-8;
/// Columns whose residual norm falls below this fraction of their original
/// norm are treated as linearly dependent.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionVariance {
    pub s2: f64,
    /// Columns of `Q` dropped as linearly dependent on earlier ones.
    pub dropped_columns: Vec<usize>,
}

/// Orthonormal basis of the column space of `q` by modified Gram-Schmidt.
fn orthonormal_basis(q: &DMatrix<f64>) -> (Vec<DVector<f64>>, Vec<usize>) {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut dropped = Vec::new();
    for c in 0..q.ncols() {
        let mut v = q.column(c).into_owned();
        let norm0 = v.norm();
        for b in &basis {
            let proj = b.dot(&v);
            v.axpy(-proj, b, 1.0);
        }
        let norm = v.norm();
        if norm0 == 0.0 || norm <= RANK_TOL * norm0 {
            dropped.push(c);
        } else {
            basis.push(v / norm);
        }
    }
    (basis, dropped)
}

/// Regression-assisted variance of the mean pair difference,
/// `I^-2 tau_Q' (I - H) tau_Q` with `tau_Q,i = tau_i / sqrt(1 - h_i)`.
///
/// `q` has one row per pair. Dependent columns are dropped and reported.
pub fn regression_assisted_variance(
    design: &MatchedDesign,
    q: &DMatrix<f64>,
    k: f64,
) -> Result<RegressionVariance> {
    let stats = PairStatistics::from_design(design, k);
    regression_variance_of(&stats.tau, q)
}

pub(crate) fn regression_variance_of(tau: &[f64], q: &DMatrix<f64>) -> Result<RegressionVariance> {
    let i = tau.len();
    if q.nrows() != i {
        return Err(Error::InvalidArgument(alloc::format!(
            "Q has {} rows for {i} pairs",
            q.nrows()
        )));
    }
    let (basis, dropped_columns) = orthonormal_basis(q);
    if basis.is_empty() || basis.len() >= i {
        return Err(Error::InvalidArgument(alloc::format!(
            "Q must have between 1 and {} independent columns, has {}",
            i.saturating_sub(1),
            basis.len()
        )));
    }
    let mut adjusted = DVector::<f64>::zeros(i);
    for r in 0..i {
        let h: f64 = basis.iter().map(|b| b[r] * b[r]).sum();
        if h >= 1.0 - LEVERAGE_TOL {
            return Err(Error::LeverageOne(r));
        }
        adjusted[r] = tau[r] / libm::sqrt(1.0 - h);
    }
    // (I - H) t = t - sum_b (b' t) b.
    let mut resid = adjusted;
    for b in &basis {
        let proj = b.dot(&resid);
        resid.axpy(-proj, b, 1.0);
    }
    let s2 = resid.norm_squared() / (i as f64 * i as f64);
    if s2 == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok(RegressionVariance { s2, dropped_columns })
}

/// Pair-level regressors: an intercept, centered within-pair covariate
/// means and centered far-minus-near covariate differences.
pub fn default_pair_covariates(design: &MatchedDesign) -> DMatrix<f64> {
    let i = design.n_pairs();
    let p = design.pairs.first().map_or(0, |pr| pr.near.x.len());
    let mut q = DMatrix::<f64>::zeros(i, 1 + 2 * p);
    for (r, pair) in design.pairs.iter().enumerate() {
        q[(r, 0)] = 1.0;
        for k in 0..p {
            q[(r, 1 + k)] = 0.5 * (pair.near.x[k] + pair.far.x[k]);
            q[(r, 1 + p + k)] = pair.far.x[k] - pair.near.x[k];
        }
    }
    for c in 1..q.ncols() {
        let m = q.column(c).mean();
        for r in 0..i {
            q[(r, c)] -= m;
        }
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::mean_variance;
    use crate::model::{MatchedPair, Unit};
    use alloc::format;
    use alloc::vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ones_column_reduces_to_classical() {
        let tau = [1.0, 2.0, 3.0];
        let q = DMatrix::from_element(3, 1, 1.0);
        let r = regression_variance_of(&tau, &q).unwrap();
        assert!((r.s2 - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(mean_variance(&tau).unwrap(), 1.0 / 3.0);
        assert!(r.dropped_columns.is_empty());
    }

    #[test]
    fn ones_column_matches_on_random_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..50 {
            let n = rng.random_range(3..60);
            let tau: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 4.0 - 1.0).collect();
            let q = DMatrix::from_element(n, 1, 1.0);
            let a = regression_variance_of(&tau, &q).unwrap().s2;
            let b = mean_variance(&tau).unwrap();
            assert!((a - b).abs() <= 1e-12 * b);
        }
    }

    #[test]
    fn duplicate_column_is_dropped() {
        let tau = [1.0, 2.0, 4.0, 3.0, 0.5];
        let x = [0.1, -0.2, 0.4, 0.0, -0.3];
        let q = DMatrix::from_fn(5, 3, |r, c| if c == 0 { 1.0 } else { x[r] });
        let r = regression_variance_of(&tau, &q).unwrap();
        assert_eq!(r.dropped_columns, vec![2]);
        let q2 = DMatrix::from_fn(5, 2, |r, c| if c == 0 { 1.0 } else { x[r] });
        assert!((regression_variance_of(&tau, &q2).unwrap().s2 - r.s2).abs() < 1e-14);
    }

    #[test]
    fn indicator_row_has_leverage_one() {
        let tau = [1.0, 2.0, 4.0, 3.0];
        let q = DMatrix::from_fn(4, 2, |r, c| if c == 0 { 1.0 } else if r == 2 { 1.0 } else { 0.0 });
        assert_eq!(regression_variance_of(&tau, &q).unwrap_err(), Error::LeverageOne(2));
    }

    #[test]
    fn informative_covariate_reduces_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let pairs: Vec<MatchedPair> = (0..5000)
            .map(|i| {
                let v: f64 = rng.random::<f64>() * 2.0 - 1.0;
                let noise: f64 = rng.random::<f64>() - 0.5;
                let near = Unit::new(format!("n{i}"), vec![v], 0.0, false, 0.0).unwrap();
                let far = Unit::new(format!("f{i}"), vec![v], 1.0, true, 2.0 * v + noise).unwrap();
                MatchedPair::new(near, far).unwrap()
            })
            .collect();
        let d = MatchedDesign::from_pairs(pairs);
        let q = default_pair_covariates(&d);
        let r = regression_assisted_variance(&d, &q, 0.0).unwrap();
        let s2 = super::super::PairStatistics::from_design(&d, 0.0).variance().unwrap();
        // The difference column is identically zero and gets dropped.
        assert_eq!(r.dropped_columns, vec![2]);
        assert!(r.s2 < s2);
    }
}
