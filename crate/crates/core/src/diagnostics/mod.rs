//! Balance tables, compliance summaries and permutation tests of the
//! within-pair randomization assumption.

mod cpt;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::MatchedDesign;

pub use cpt::{biased_cpt, cpt, gamma_cap_search, CptResult, GammaCapResult};

/// One line of a balance table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceRow {
    pub name: String,
    pub near_mean: f64,
    pub far_mean: f64,
    /// `|far_mean - near_mean| / sd`, with `sd` taken over the pre-match cohort.
    pub smd: f64,
    pub sd: f64,
    /// The reference SD is zero while the means differ; `smd` is then infinite.
    pub flagged: bool,
}

/// Near/far means and absolute standardized differences for each covariate,
/// followed by a row for the dose itself.
///
/// The reference SD is the sample SD over the pre-match cohort (pair members
/// plus eliminated units), so it does not depend on the matching.
pub fn balance_table(design: &MatchedDesign, names: &[String]) -> Result<Vec<BalanceRow>> {
    if design.pairs.is_empty() {
        return Err(Error::InsufficientData("design has no pairs".into()));
    }
    let p = design.pairs[0].near.x.len();
    if names.len() != p {
        return Err(Error::InvalidArgument(format!(
            "{} covariate names for {p} covariates",
            names.len()
        )));
    }
    let cohort: Vec<&crate::Unit> = design.all_units().collect();
    let mut rows = Vec::with_capacity(p + 1);
    let mut push = |name: String, get: &dyn Fn(&crate::Unit) -> f64| {
        let i = design.n_pairs() as f64;
        let near_mean = design.pairs.iter().map(|q| get(&q.near)).sum::<f64>() / i;
        let far_mean = design.pairs.iter().map(|q| get(&q.far)).sum::<f64>() / i;
        // Sorted so the SD does not depend on which member is listed first.
        let mut vals: Vec<f64> = cohort.iter().map(|u| get(u)).collect();
        vals.sort_by(f64::total_cmp);
        let sd = if vals.len() > 1 {
            libm::sqrt(crate::stats::sample_variance(&vals))
        } else {
            0.0
        };
        let diff = (far_mean - near_mean).abs();
        let (smd, flagged) = if sd > 0.0 {
            (diff / sd, false)
        } else if diff == 0.0 {
            (0.0, false)
        } else {
            (f64::INFINITY, true)
        };
        rows.push(BalanceRow {
            name,
            near_mean,
            far_mean,
            smd,
            sd,
            flagged,
        });
    };
    for (k, name) in names.iter().enumerate() {
        push(name.clone(), &|u| u.x[k]);
    }
    push("dose".into(), &|u| u.dose);
    Ok(rows)
}

/// Plain-text rendering with one covariate per line: name, near mean, far
/// mean and absolute SMD, each to two decimals.
pub fn format_balance_table(rows: &[BalanceRow]) -> String {
    let width = rows.iter().map(|r| r.name.len()).max().unwrap_or(0).max(9);
    let mut out = format!(
        "{:<width$}  {:>10}  {:>10}  {:>8}\n",
        "covariate", "near", "far", "|SMD|"
    );
    for r in rows {
        let flag = if r.flagged { " *" } else { "" };
        out.push_str(&format!(
            "{:<width$}  {:>10.2}  {:>10.2}  {:>8.2}{flag}\n",
            r.name, r.near_mean, r.far_mean, r.smd
        ));
    }
    out
}

/// Encouragement summary of a design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplianceSummary {
    pub n_pairs: usize,
    pub mean_near_dose: f64,
    pub mean_far_dose: f64,
    pub mean_gap: f64,
    pub max_gap: f64,
    pub near_treated_rate: f64,
    pub far_treated_rate: f64,
    /// Estimated compliance rate: mean of `D_far - D_near`.
    pub iota_hat: f64,
}

pub fn compliance_summary(design: &MatchedDesign) -> Result<ComplianceSummary> {
    if design.pairs.is_empty() {
        return Err(Error::InsufficientData("design has no pairs".into()));
    }
    let i = design.n_pairs() as f64;
    let avg = |f: &dyn Fn(&crate::MatchedPair) -> f64| design.pairs.iter().map(f).sum::<f64>() / i;
    let near_treated_rate = avg(&|p| p.near.d());
    let far_treated_rate = avg(&|p| p.far.d());
    Ok(ComplianceSummary {
        n_pairs: design.n_pairs(),
        mean_near_dose: avg(&|p| p.near.dose),
        mean_far_dose: avg(&|p| p.far.dose),
        mean_gap: avg(&|p| p.dose_gap),
        max_gap: design.pairs.iter().fold(0.0, |m, p| p.dose_gap.max(m)),
        near_treated_rate,
        far_treated_rate,
        iota_hat: far_treated_rate - near_treated_rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{MatchedPair, Unit};
    use alloc::vec;
    use alloc::vec::Vec;

    fn pair(k: usize, xn: f64, xf: f64, dn: f64, df: f64) -> MatchedPair {
        MatchedPair::new(
            Unit::new(format!("n{k}"), vec![xn], dn, k % 2 == 0, 0.0).unwrap(),
            Unit::new(format!("f{k}"), vec![xf], df, true, 0.0).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn identical_groups_have_zero_smd() {
        let d = MatchedDesign::from_pairs((0..6).map(|k| pair(k, k as f64, k as f64, 1.0, 2.0 + k as f64)).collect());
        let rows = balance_table(&d, &["x".into()]).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].smd, 0.0);
        assert_eq!(rows[1].name, "dose");
        assert!(rows[1].smd > 0.0);
    }

    #[test]
    fn hand_computed_smd() {
        // Cohort x = {0, 2, 1, 3}; sample SD = sqrt(5/3); mean diff = 2.
        let d = MatchedDesign::from_pairs(vec![pair(0, 0.0, 2.0, 0.0, 5.0), pair(1, 1.0, 3.0, 0.0, 5.0)]);
        let rows = balance_table(&d, &["x".into()]).unwrap();
        assert!((rows[0].smd - 2.0 / libm::sqrt(5.0 / 3.0)).abs() < 1e-12);
        assert_eq!(rows[0].near_mean, 0.5);
        assert_eq!(rows[0].far_mean, 2.5);
    }

    #[test]
    fn swapping_groups_keeps_smd() {
        let d = MatchedDesign::from_pairs(vec![pair(0, 0.3, 2.0, 0.0, 5.0), pair(1, 1.7, -3.0, 0.0, 5.0), pair(2, 1.0, 0.0, 1.0, 2.0)]);
        let swapped: Vec<MatchedPair> = d
            .pairs
            .iter()
            .map(|p| {
                let mut q = p.clone();
                core::mem::swap(&mut q.near.x, &mut q.far.x);
                q
            })
            .collect();
        let a = balance_table(&d, &["x".into()]).unwrap();
        let b = balance_table(&MatchedDesign::from_pairs(swapped), &["x".into()]).unwrap();
        assert_eq!(a[0].smd, b[0].smd);
        assert_eq!(a[0].near_mean, b[0].far_mean);
    }

    #[test]
    fn text_layout_has_two_decimals() {
        let d = MatchedDesign::from_pairs(vec![pair(0, 0.0, 2.0, 2.07, 27.1), pair(1, 1.0, 3.0, 2.07, 27.1)]);
        let text = format_balance_table(&balance_table(&d, &["x".into()]).unwrap());
        let dose_line = text.lines().last().unwrap();
        assert!(dose_line.contains("2.07") && dose_line.contains("27.10"), "{text}");
    }

    #[test]
    fn compliance_summary_counts() {
        let d = MatchedDesign::from_pairs(vec![pair(0, 0.0, 0.0, 1.0, 5.0), pair(1, 0.0, 0.0, 1.0, 9.0)]);
        let s = compliance_summary(&d).unwrap();
        assert_eq!(s.iota_hat, 0.5);
        assert_eq!(s.max_gap, 8.0);
        assert_eq!(s.mean_gap, 6.0);
    }

    #[test]
    fn wrong_name_count_rejected() {
        let d = MatchedDesign::from_pairs(vec![pair(0, 0.0, 0.0, 1.0, 5.0)]);
        assert!(balance_table(&d, &[]).is_err());
    }
}
