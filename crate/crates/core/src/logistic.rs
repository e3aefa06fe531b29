//! Logistic regression fitted by iteratively reweighted least squares.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::stats::expit;

const MAX_ITER: usize = 100;
const TOL: f64 = 1e-8;
/// Linear predictors beyond this magnitude mean the fit has run off to
/// infinity along a separating direction.
const ETA_LIMIT: f64 = 40.0;
/// Fitted probabilities outside `[PIN, 1 - PIN]` are considered pinned.
pub const PIN: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticFit {
    pub coef: DVector<f64>,
    /// Fitted probabilities, unclamped.
    pub probs: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Some fitted probability is pinned at 0 or 1.
    pub separated: bool,
}

impl LogisticFit {
    pub fn linear_predictor(&self, row: &[f64]) -> f64 {
        row.iter().zip(self.coef.iter()).map(|(a, b)| a * b).sum()
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        expit(self.linear_predictor(row))
    }

    pub fn clamped_probs(&self) -> Vec<f64> {
        self.probs.iter().map(|&p| p.clamp(PIN, 1.0 - PIN)).collect()
    }
}

/// Fits `P(y = 1 | x) = expit(x' beta)`; `features` must already carry an
/// intercept column when one is wanted. `labels` are 0/1.
///
/// Newton steps solve the weighted normal equations by Cholesky, falling
/// back to a pseudo-inverse when the information matrix is singular
/// (collinear indicator columns, or weights collapsing under separation).
pub fn fit_logistic(features: &DMatrix<f64>, labels: &[f64]) -> LogisticFit {
    let (n, k) = features.shape();
    debug_assert_eq!(n, labels.len());
    let mut beta = DVector::<f64>::zeros(k);
    let mut eta = DVector::<f64>::zeros(n);
    let mut converged = false;
    let mut iterations = 0;
    let mut runaway = false;

    while iterations < MAX_ITER {
        iterations += 1;
        let mut info = DMatrix::<f64>::zeros(k, k);
        let mut score = DVector::<f64>::zeros(k);
        for i in 0..n {
            let p = expit(eta[i]);
            let w = p * (1.0 - p);
            let row = features.row(i);
            for a in 0..k {
                let xa = row[a];
                score[a] += xa * (labels[i] - p);
                if w > 0.0 {
                    for b in a..k {
                        info[(a, b)] += w * xa * row[b];
                    }
                }
            }
        }
        for a in 0..k {
            for b in 0..a {
                info[(a, b)] = info[(b, a)];
            }
        }
        let step = match info.clone().cholesky() {
            Some(ch) => ch.solve(&score),
            None => match info.pseudo_inverse(1e-12) {
                Ok(pinv) => pinv * &score,
                Err(_) => break,
            },
        };
        beta += &step;
        eta = features * &beta;
        let max_step = step.iter().fold(0.0f64, |m, s| m.max(s.abs()));
        if max_step < TOL {
            converged = true;
            break;
        }
        if eta.iter().any(|e| e.abs() > ETA_LIMIT) || !max_step.is_finite() {
            runaway = true;
            break;
        }
    }

    let probs: Vec<f64> = eta.iter().map(|&e| expit(e)).collect();
    let pinned = probs.iter().any(|&p| !(PIN..=1.0 - PIN).contains(&p));
    LogisticFit {
        coef: beta,
        probs,
        iterations,
        converged,
        separated: pinned || runaway,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn intercept_only_recovers_prevalence() {
        let x = DMatrix::from_element(10, 1, 1.0);
        let y = [1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let fit = fit_logistic(&x, &y);
        assert!(fit.converged);
        for p in fit.probs {
            assert!((p - 0.3).abs() < 1e-12);
        }
    }

    #[test]
    fn known_coefficients() {
        // Two-group data: log-odds 0 in group 0 and ln 3 in group 1 are the MLE.
        let mut rows = vec![];
        let mut y = vec![];
        for (g, ones, zeros) in [(0.0, 5, 5), (1.0, 6, 2)] {
            for i in 0..ones + zeros {
                rows.extend_from_slice(&[1.0, g]);
                y.push(if i < ones { 1.0 } else { 0.0 });
            }
        }
        let x = DMatrix::from_row_slice(y.len(), 2, &rows);
        let fit = fit_logistic(&x, &y);
        assert!(fit.coef[0].abs() < 1e-10);
        assert!((fit.coef[1] - libm::log(3.0)).abs() < 1e-10);
    }

    #[test]
    fn separation_is_flagged() {
        let x = DMatrix::from_row_slice(6, 2, &[1., -3., 1., -2., 1., -1., 1., 1., 1., 2., 1., 3.]);
        let y = [0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let fit = fit_logistic(&x, &y);
        assert!(fit.separated);
        assert!(fit.clamped_probs().iter().all(|p| (PIN..=1.0 - PIN).contains(p)));
    }

    #[test]
    fn collinear_columns_still_fit() {
        // Full one-hot coding plus an intercept is rank deficient.
        let x = DMatrix::from_row_slice(6, 3, &[1., 1., 0., 1., 1., 0., 1., 1., 0., 1., 0., 1., 1., 0., 1., 1., 0., 1.]);
        let y = [1.0, 0.0, 0.0, 1.0, 1.0, 0.0];
        let fit = fit_logistic(&x, &y);
        assert!(!fit.separated);
        assert!((fit.probs[0] - 1.0 / 3.0).abs() < 1e-8);
        assert!((fit.probs[3] - 2.0 / 3.0).abs() < 1e-8);
    }
}
