use alloc::vec::Vec;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logistic::{fit_logistic, LogisticFit};
use crate::model::{Template, Unit};
use crate::stats::median;

/// What the score predicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PropensityLabel {
    /// Dose strictly above the cohort median.
    HighDoseHalf,
    /// Membership of the template rather than the observational cohort.
    TemplateMembership,
}

/// Logistic score fitted on an intercept plus the raw covariates.
pub(crate) struct ScoreModel {
    pub fit: LogisticFit,
}

impl ScoreModel {
    pub(crate) fn fit(rows: &[&[f64]], labels: &[f64]) -> Result<Self> {
        let n = rows.len();
        if n < 2 {
            return Err(Error::InsufficientData("score model needs two rows".into()));
        }
        let ones = labels.iter().filter(|&&y| y == 1.0).count();
        if ones == 0 || ones == n {
            return Err(Error::InsufficientData(
                "both label classes must be non-empty".into(),
            ));
        }
        let p = rows[0].len();
        let features = DMatrix::from_fn(n, p + 1, |i, k| if k == 0 { 1.0 } else { rows[i][k - 1] });
        Ok(ScoreModel {
            fit: fit_logistic(&features, labels),
        })
    }

    /// Score of an arbitrary covariate row, clamped like the fitted scores.
    pub(crate) fn score(&self, x: &[f64]) -> f64 {
        let eta = self.fit.coef[0]
            + x.iter()
                .zip(self.fit.coef.iter().skip(1))
                .map(|(a, b)| a * b)
                .sum::<f64>();
        crate::stats::expit(eta).clamp(crate::logistic::PIN, 1.0 - crate::logistic::PIN)
    }
}

/// Fitted scores in `(0, 1)`.
///
/// For [`PropensityLabel::HighDoseHalf`] one score per unit is returned;
/// for [`PropensityLabel::TemplateMembership`] the units come first,
/// followed by the template rows. A separated fit is reported as
/// [`Error::SeparationDetected`] carrying the clamped scores.
pub fn fit_propensity(
    units: &[Unit],
    label: PropensityLabel,
    template: Option<&Template>,
) -> Result<Vec<f64>> {
    let (rows, labels) = score_rows(units, label, template)?;
    let model = ScoreModel::fit(&rows, &labels)?;
    let scores = model.fit.clamped_probs();
    if model.fit.separated {
        return Err(Error::SeparationDetected {
            clamped_scores: scores,
        });
    }
    Ok(scores)
}

pub(crate) fn score_rows<'a>(
    units: &'a [Unit],
    label: PropensityLabel,
    template: Option<&'a Template>,
) -> Result<(Vec<&'a [f64]>, Vec<f64>)> {
    let mut rows: Vec<&[f64]> = units.iter().map(|u| u.x.as_slice()).collect();
    let labels = match label {
        PropensityLabel::HighDoseHalf => {
            let doses: Vec<f64> = units.iter().map(|u| u.dose).collect();
            if doses.is_empty() {
                return Err(Error::InsufficientData("no units".into()));
            }
            let med = median(&doses);
            doses.iter().map(|&z| if z > med { 1.0 } else { 0.0 }).collect()
        }
        PropensityLabel::TemplateMembership => {
            let t = template.ok_or_else(|| {
                Error::InvalidArgument("template membership needs a template".into())
            })?;
            rows.extend(t.units.iter().map(|u| u.x.as_slice()));
            let mut l = alloc::vec![0.0; units.len()];
            l.resize(units.len() + t.len(), 1.0);
            l
        }
    };
    Ok((rows, labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TemplateUnit;
    use alloc::format;
    use alloc::vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit(i: usize, x: Vec<f64>, dose: f64) -> Unit {
        Unit::new(format!("u{i}"), x, dose, false, 0.0).unwrap()
    }

    #[test]
    fn independent_covariate_gives_prevalence() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let units: Vec<Unit> = (0..10_000)
            .map(|i| unit(i, vec![rng.random::<f64>()], rng.random::<f64>()))
            .collect();
        let scores = fit_propensity(&units, PropensityLabel::HighDoseHalf, None).unwrap();
        let m = crate::stats::mean(&scores);
        assert!((m - 0.5).abs() < 0.02);
    }

    #[test]
    fn separating_covariate_is_reported() {
        let units: Vec<Unit> = (0..8).map(|i| unit(i, vec![i as f64], i as f64)).collect();
        match fit_propensity(&units, PropensityLabel::HighDoseHalf, None) {
            Err(Error::SeparationDetected { clamped_scores }) => {
                assert_eq!(clamped_scores.len(), 8);
                assert!(clamped_scores.iter().all(|&p| (1e-6..=1.0 - 1e-6).contains(&p)));
            }
            other => panic!("expected separation, got {other:?}"),
        }
    }

    #[test]
    fn constant_covariates_give_prevalence() {
        let units: Vec<Unit> = (0..5).map(|i| unit(i, vec![1.0], i as f64)).collect();
        let template = Template::new(
            (0..3)
                .map(|i| TemplateUnit {
                    id: format!("t{i}"),
                    x: vec![1.0],
                })
                .collect(),
        );
        let scores =
            fit_propensity(&units, PropensityLabel::TemplateMembership, Some(&template)).unwrap();
        assert_eq!(scores.len(), 8);
        for s in scores {
            assert!((s - 3.0 / 8.0).abs() < 1e-9);
        }
    }
}
