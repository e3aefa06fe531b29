//! The two simulation studies: design strength versus bound width, and
//! coverage of the randomization and biased-randomization limits.
//!
//! Each replicate draws from its own generator, derived from the
//! configured seed and a stable replicate index, so tables do not depend on
//! the order (or concurrency) in which replicates are evaluated.

mod study1;
mod study2;

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use study1::{
    gen_study1_population, run_study1, study1_replicate, DoseScenario, EffectScenario,
    Study1Config, Study1Population, Study1Row, Study1Table,
};
pub use study2::{
    gen_study2_pairs, oracle_variance, run_study2, study2_replicate, Mechanism, OutcomeType,
    ReplicateCoverage, Study2Cell, Study2Config, Study2Row, Study2Sample, Study2Table,
};

/// Empirical dose distribution the second study resamples from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DosePool {
    pub doses: Vec<f64>,
}

/// Size of the bundled pool.
const SYNTHETIC_POOL: usize = 2000;
/// Mean excess travel time (minutes) of the bundled pool.
const SYNTHETIC_MEAN: f64 = 17.0;

impl DosePool {
    pub fn new(doses: Vec<f64>) -> Result<Self> {
        if doses.is_empty() {
            return Err(Error::MissingDosePool);
        }
        if let Some(z) = doses.iter().find(|z| !z.is_finite()) {
            return Err(Error::InvalidArgument(alloc::format!("dose {z} is not finite")));
        }
        Ok(DosePool { doses })
    }

    /// Deterministic stand-in for a travel-time distribution: the
    /// `(k + 1/2) / 2000` quantiles of an exponential law with mean 17
    /// minutes, spanning roughly 0 to 141.
    pub fn synthetic() -> Self {
        let doses = (0..SYNTHETIC_POOL)
            .map(|k| {
                let u = (k as f64 + 0.5) / SYNTHETIC_POOL as f64;
                -SYNTHETIC_MEAN * libm::log(1.0 - u)
            })
            .collect();
        DosePool { doses }
    }

    pub fn len(&self) -> usize {
        self.doses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doses.is_empty()
    }
}

/// Mean and sample SD of per-replicate values.
pub(crate) fn summarize(values: &[f64]) -> (f64, f64) {
    let m = crate::stats::mean(values);
    let sd = if values.len() > 1 {
        libm::sqrt(crate::stats::sample_variance(values))
    } else {
        0.0
    };
    (m, sd)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_pool_shape() {
        let p = DosePool::synthetic();
        assert_eq!(p.len(), 2000);
        let m = crate::stats::mean(&p.doses);
        assert!((m - 17.0).abs() < 0.2, "{m}");
        assert!(p.doses.windows(2).all(|w| w[0] < w[1]));
        assert!(p.doses[0] > 0.0 && *p.doses.last().unwrap() < 150.0);
    }

    #[test]
    fn empty_pool_rejected() {
        assert_eq!(DosePool::new(Vec::new()), Err(Error::MissingDosePool));
    }
}
