use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::stats::average_ranks;

/// Relative eigenvalue cutoff for the pseudo-inverse.
const EIG_TOL: f64 = 1e-10;

/// Rank-based Mahalanobis distance over a fixed pool of rows.
///
/// Each column is replaced by its average ranks over the pool, and the
/// distance uses the (pseudo-)inverse of the sample covariance of the ranks.
/// Rows are stored pre-whitened so a distance is a Euclidean norm.
#[derive(Debug, Clone)]
pub struct RankMahalanobis {
    whitened: Vec<Vec<f64>>,
}

impl RankMahalanobis {
    pub fn fit(rows: &[&[f64]]) -> Result<Self> {
        let n = rows.len();
        if n < 2 {
            return Err(Error::InsufficientData("distance needs at least two rows".into()));
        }
        let p = rows[0].len();
        if p == 0 || rows.iter().any(|r| r.len() != p) {
            return Err(Error::InvalidArgument(
                "rows must share a non-zero covariate dimension".into(),
            ));
        }
        let mut ranks = DMatrix::<f64>::zeros(n, p);
        for k in 0..p {
            let col: Vec<f64> = rows.iter().map(|r| r[k]).collect();
            for (i, r) in average_ranks(&col).into_iter().enumerate() {
                ranks[(i, k)] = r;
            }
        }
        let means = ranks.row_mean();
        let centered = DMatrix::from_fn(n, p, |i, k| ranks[(i, k)] - means[k]);
        let cov = centered.transpose() * &centered / (n as f64 - 1.0);
        let eig = cov.symmetric_eigen();
        let max_ev = eig.eigenvalues.iter().fold(0.0f64, |m, &v| m.max(v));
        if max_ev <= 0.0 {
            return Err(Error::DegenerateCovariance);
        }
        // Whitening map W with W'W = pinv(cov): rows of W are v_k / sqrt(l_k).
        let kept: Vec<usize> = (0..p)
            .filter(|&k| eig.eigenvalues[k] > EIG_TOL * max_ev)
            .collect();
        let whitened = (0..n)
            .map(|i| {
                kept.iter()
                    .map(|&k| {
                        let v = eig.eigenvectors.column(k);
                        let proj: f64 = (0..p).map(|c| v[c] * ranks[(i, c)]).sum();
                        proj / libm::sqrt(eig.eigenvalues[k])
                    })
                    .collect()
            })
            .collect();
        Ok(RankMahalanobis { whitened })
    }

    pub fn len(&self) -> usize {
        self.whitened.len()
    }

    pub fn is_empty(&self) -> bool {
        self.whitened.is_empty()
    }

    /// Distance between pooled rows `a` and `b`.
    #[inline]
    pub fn distance(&self, a: usize, b: usize) -> f64 {
        let (u, v) = (&self.whitened[a], &self.whitened[b]);
        let s: f64 = u.iter().zip(v).map(|(x, y)| (x - y) * (x - y)).sum();
        libm::sqrt(s)
    }
}
