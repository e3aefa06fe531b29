//! Domain types shared by every stage: study units, templates, matched
//! pairs and designs, and the simulation-only potential-outcome table.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::design::DesignConfig;
use crate::error::{Error, Result};

/// One study participant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Unit {
    pub id: String,
    /// Covariates, categorical columns already expanded to indicators.
    pub x: Vec<f64>,
    /// Continuous instrument dose, e.g. excess travel time in minutes.
    pub dose: f64,
    /// Binary treatment actually received.
    pub treated: bool,
    /// Outcome; binary outcomes are encoded 0/1.
    pub outcome: f64,
    /// Values that must agree exactly within a pair.
    #[serde(default)]
    pub exact_keys: Vec<String>,
}

impl Unit {
    pub fn new(
        id: impl Into<String>,
        x: Vec<f64>,
        dose: f64,
        treated: bool,
        outcome: f64,
    ) -> Result<Self> {
        let unit = Unit {
            id: id.into(),
            x,
            dose,
            treated,
            outcome,
            exact_keys: Vec::new(),
        };
        unit.check()?;
        Ok(unit)
    }

    pub fn with_exact_keys(mut self, keys: Vec<String>) -> Self {
        self.exact_keys = keys;
        self
    }

    pub fn check(&self) -> Result<()> {
        if let Some(k) = self.x.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "unit {}: covariate {k} is not finite",
                self.id
            )));
        }
        if !self.dose.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "unit {}: dose is not finite",
                self.id
            )));
        }
        if !self.outcome.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "unit {}: outcome is not finite",
                self.id
            )));
        }
        Ok(())
    }

    /// Treatment as a number in {0, 1}.
    #[inline]
    pub fn d(&self) -> f64 {
        if self.treated {
            1.0
        } else {
            0.0
        }
    }
}

/// A covariate-only phantom unit standing in for a target-population member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateUnit {
    pub id: String,
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Template {
    pub units: Vec<TemplateUnit>,
}

impl Template {
    pub fn new(units: Vec<TemplateUnit>) -> Self {
        Template { units }
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    /// Component-wise mean covariate vector, `None` when empty.
    pub fn mean_covariates(&self) -> Option<Vec<f64>> {
        mean_rows(self.units.iter().map(|u| u.x.as_slice()))
    }
}

pub(crate) fn mean_rows<'a>(rows: impl Iterator<Item = &'a [f64]>) -> Option<Vec<f64>> {
    let mut acc: Option<Vec<f64>> = None;
    let mut count = 0usize;
    for row in rows {
        let sum = acc.get_or_insert_with(|| alloc::vec![0.0; row.len()]);
        for (s, v) in sum.iter_mut().zip(row) {
            *s += v;
        }
        count += 1;
    }
    acc.map(|mut s| {
        s.iter_mut().for_each(|v| *v /= count as f64);
        s
    })
}

/// Two matched units ordered by dose: `near` has the smaller dose.
///
/// In a pair-randomized encouragement experiment the `far` member plays the
/// role of the encouraged unit (`Z = 1`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub near: Unit,
    pub far: Unit,
    pub dose_gap: f64,
}

impl MatchedPair {
    /// Orders the two units by dose; equal doses are ordered by ascending id.
    pub fn new(a: Unit, b: Unit) -> Result<Self> {
        if a.id == b.id {
            return Err(Error::InvalidArgument(format!(
                "pair members share id {}",
                a.id
            )));
        }
        let (near, far) = match a.dose.partial_cmp(&b.dose) {
            Some(Ordering::Less) => (a, b),
            Some(Ordering::Greater) => (b, a),
            _ => {
                if a.id < b.id {
                    (a, b)
                } else {
                    (b, a)
                }
            }
        };
        let dose_gap = far.dose - near.dose;
        Ok(MatchedPair {
            near,
            far,
            dose_gap,
        })
    }

    /// Observed `sum_j (2 Z_ij - 1) R_ij`.
    #[inline]
    pub fn outcome_difference(&self) -> f64 {
        self.far.outcome - self.near.outcome
    }

    /// Observed `sum_j (2 Z_ij - 1) D_ij`.
    #[inline]
    pub fn treatment_difference(&self) -> f64 {
        self.far.d() - self.near.d()
    }
}

/// How a design was produced.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config: Option<DesignConfig>,
    pub seed: Option<u64>,
    /// Size of the observational cohort before matching.
    pub n_observational: usize,
    /// Number of sinks, including an automatically added one.
    pub n_sinks: usize,
    /// True when an extra sink was appended to make the vertex count even.
    pub auto_sink: bool,
    #[serde(default)]
    pub covariate_names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedDesign {
    pub pairs: Vec<MatchedPair>,
    /// Observational units paired with a sink.
    pub eliminated: Vec<Unit>,
    pub provenance: Provenance,
}

impl MatchedDesign {
    /// A design made only of pairs (no sinks).
    pub fn from_pairs(pairs: Vec<MatchedPair>) -> Self {
        let n = 2 * pairs.len();
        MatchedDesign {
            pairs,
            eliminated: Vec::new(),
            provenance: Provenance {
                n_observational: n,
                ..Provenance::default()
            },
        }
    }

    pub fn n_pairs(&self) -> usize {
        self.pairs.len()
    }

    pub fn dose_gaps(&self) -> Vec<f64> {
        self.pairs.iter().map(|p| p.dose_gap).collect()
    }

    /// Every unit in the pre-match cohort: pair members then eliminated units.
    pub fn all_units(&self) -> impl Iterator<Item = &Unit> {
        self.pairs
            .iter()
            .flat_map(|p| [&p.near, &p.far])
            .chain(self.eliminated.iter())
    }

    /// Keeps pairs whose both members satisfy `pred`; returns the subset and
    /// the number of mixed pairs dropped.
    pub fn subset_pairs(&self, pred: impl Fn(&Unit) -> bool) -> (MatchedDesign, usize) {
        let mut kept = Vec::new();
        let mut mixed = 0;
        for p in &self.pairs {
            match (pred(&p.near), pred(&p.far)) {
                (true, true) => kept.push(p.clone()),
                (false, false) => {}
                _ => mixed += 1,
            }
        }
        let design = MatchedDesign {
            pairs: kept,
            eliminated: Vec::new(),
            provenance: self.provenance.clone(),
        };
        (design, mixed)
    }
}

/// Outcome of one invariant check in [`validate_design`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignReport {
    pub checks: Vec<InvariantCheck>,
}

impl DesignReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&InvariantCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Checks the structural invariants of a matched design.
pub fn validate_design(design: &MatchedDesign) -> DesignReport {
    let mut checks = Vec::new();
    let mut push = |name: &str, failures: Vec<String>| {
        checks.push(InvariantCheck {
            name: name.into(),
            passed: failures.is_empty(),
            detail: failures.join("; "),
        });
    };

    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    for u in design.all_units() {
        *seen.entry(u.id.as_str()).or_default() += 1;
    }
    push(
        "unique-membership",
        seen.iter()
            .filter(|(_, &c)| c > 1)
            .map(|(id, c)| format!("unit {id} appears {c} times"))
            .collect(),
    );

    push(
        "distinct-members",
        design
            .pairs
            .iter()
            .enumerate()
            .filter(|(_, p)| p.near.id == p.far.id)
            .map(|(i, _)| format!("pair {i} matches a unit with itself"))
            .collect(),
    );

    push(
        "dose-ordering",
        design
            .pairs
            .iter()
            .enumerate()
            .filter(|(_, p)| {
                p.near.dose > p.far.dose || (p.near.dose == p.far.dose && p.near.id > p.far.id)
            })
            .map(|(i, p)| format!("pair {i}: near dose {} > far dose {}", p.near.dose, p.far.dose))
            .collect(),
    );

    push(
        "dose-gap",
        design
            .pairs
            .iter()
            .enumerate()
            .filter(|(_, p)| !(p.dose_gap >= 0.0) || p.dose_gap != p.far.dose - p.near.dose)
            .map(|(i, p)| format!("pair {i}: recorded gap {}", p.dose_gap))
            .collect(),
    );

    let prov = &design.provenance;
    let mut count = Vec::new();
    if 2 * design.pairs.len() + design.eliminated.len() != prov.n_observational {
        count.push(format!(
            "2 x {} pairs + {} eliminated != {} observational units",
            design.pairs.len(),
            design.eliminated.len(),
            prov.n_observational
        ));
    }
    if design.eliminated.len() != prov.n_sinks {
        count.push(format!(
            "{} eliminated units but {} sinks",
            design.eliminated.len(),
            prov.n_sinks
        ));
    }
    push("pair-count", count);

    DesignReport { checks }
}

/// Principal stratum with respect to the two doses of a pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ComplianceClass {
    Complier,
    AlwaysTaker,
    NeverTaker,
}

impl ComplianceClass {
    /// `(d_T, d_C)` implied by the class.
    pub fn treatments(self) -> (bool, bool) {
        match self {
            ComplianceClass::Complier => (true, false),
            ComplianceClass::AlwaysTaker => (true, true),
            ComplianceClass::NeverTaker => (false, false),
        }
    }

    /// Classifies `(d_T, d_C)`; defiers `(0, 1)` return `None`.
    pub fn from_treatments(d_t: bool, d_c: bool) -> Option<Self> {
        match (d_t, d_c) {
            (true, false) => Some(ComplianceClass::Complier),
            (true, true) => Some(ComplianceClass::AlwaysTaker),
            (false, false) => Some(ComplianceClass::NeverTaker),
            (false, true) => None,
        }
    }
}

/// Full potential-outcome record of one simulated unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialOutcomes {
    /// Treatment received under the larger dose of the pair.
    pub d_t: bool,
    /// Treatment received under the smaller dose of the pair.
    pub d_c: bool,
    pub r_t: f64,
    pub r_c: f64,
    pub r_d0: f64,
    pub r_d1: f64,
    pub class: ComplianceClass,
}

impl PotentialOutcomes {
    pub fn from_class(class: ComplianceClass, r_d0: f64, r_d1: f64) -> Self {
        let (d_t, d_c) = class.treatments();
        let r_t = if d_t { r_d1 } else { r_d0 };
        let r_c = if d_c { r_d1 } else { r_d0 };
        PotentialOutcomes {
            d_t,
            d_c,
            r_t,
            r_c,
            r_d0,
            r_d1,
            class,
        }
    }

    /// Monotonicity and internal consistency of the record.
    pub fn is_consistent(&self) -> bool {
        ComplianceClass::from_treatments(self.d_t, self.d_c) == Some(self.class)
            && self.r_t == if self.d_t { self.r_d1 } else { self.r_d0 }
            && self.r_c == if self.d_c { self.r_d1 } else { self.r_d0 }
    }

    #[inline]
    fn d_diff(&self) -> f64 {
        (self.d_t as u8 as f64) - (self.d_c as u8 as f64)
    }
}

/// Potential outcomes aligned with a design: entry `i` holds the near and
/// far member of pair `i`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PotentialTable {
    pub pairs: Vec<[PotentialOutcomes; 2]>,
}

impl PotentialTable {
    fn units(&self) -> impl Iterator<Item = &PotentialOutcomes> {
        self.pairs.iter().flatten()
    }

    fn n_units(&self) -> f64 {
        (2 * self.pairs.len()) as f64
    }

    /// Compliance rate: mean of `d_T - d_C` over all units.
    pub fn compliance_rate(&self) -> f64 {
        self.units().map(PotentialOutcomes::d_diff).sum::<f64>() / self.n_units()
    }

    /// Mean of `r_T - r_C` over all units.
    pub fn itt(&self) -> f64 {
        self.units().map(|u| u.r_t - u.r_c).sum::<f64>() / self.n_units()
    }

    /// Population `(LB, UB)` for effect bounds `[k0, k1]` on non-compliers.
    pub fn bounds(&self, k0: f64, k1: f64) -> (f64, f64) {
        let itt = self.itt();
        let iota = self.compliance_rate();
        (itt - k0 * iota + k0, itt - k1 * iota + k1)
    }

    /// Sample average treatment effect of `D` on `R`.
    pub fn sate(&self) -> f64 {
        self.units().map(|u| u.r_d1 - u.r_d0).sum::<f64>() / self.n_units()
    }

    /// Effect ratio; `None` when no unit is a complier.
    pub fn effect_ratio(&self) -> Option<f64> {
        let num: f64 = self.units().map(|u| u.r_t - u.r_c).sum();
        let den: f64 = self.units().map(PotentialOutcomes::d_diff).sum();
        (den != 0.0).then(|| num / den)
    }

    pub fn is_consistent(&self) -> bool {
        self.units().all(PotentialOutcomes::is_consistent)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn unit(id: &str, dose: f64) -> Unit {
        Unit::new(id, vec![0.0], dose, false, 0.0).unwrap()
    }

    fn design(pairs: Vec<MatchedPair>) -> MatchedDesign {
        MatchedDesign::from_pairs(pairs)
    }

    #[test]
    fn pair_orders_by_dose_then_id() {
        let p = MatchedPair::new(unit("b", 30.0), unit("a", 10.0)).unwrap();
        assert_eq!((p.near.id.as_str(), p.far.id.as_str(), p.dose_gap), ("a", "b", 20.0));
        let tie = MatchedPair::new(unit("z", 5.0), unit("m", 5.0)).unwrap();
        assert_eq!((tie.near.id.as_str(), tie.dose_gap), ("m", 0.0));
    }

    #[test]
    fn rejects_non_finite_covariate() {
        assert!(Unit::new("a", vec![f64::NAN], 1.0, true, 0.0).is_err());
    }

    #[test]
    fn valid_design_passes() {
        let d = design(vec![
            MatchedPair::new(unit("1", 1.0), unit("2", 2.0)).unwrap(),
            MatchedPair::new(unit("3", 1.0), unit("4", 9.0)).unwrap(),
        ]);
        assert!(validate_design(&d).all_passed());
    }

    #[test]
    fn duplicate_membership_fails() {
        let mut d = design(vec![
            MatchedPair::new(unit("1", 1.0), unit("2", 2.0)).unwrap(),
            MatchedPair::new(unit("1", 1.0), unit("4", 9.0)).unwrap(),
        ]);
        d.provenance.n_observational = 4;
        let r = validate_design(&d);
        assert!(!r.check("unique-membership").unwrap().passed);
    }

    #[test]
    fn dose_ordering_failure() {
        let mut p = MatchedPair::new(unit("1", 1.0), unit("2", 2.0)).unwrap();
        core::mem::swap(&mut p.near, &mut p.far);
        let r = validate_design(&design(vec![p]));
        assert!(!r.check("dose-ordering").unwrap().passed);
        assert!(!r.check("dose-gap").unwrap().passed);
    }

    #[test]
    fn pair_count_uses_provenance() {
        let mut d = design(vec![MatchedPair::new(unit("1", 1.0), unit("2", 2.0)).unwrap()]);
        d.eliminated.push(unit("3", 0.0));
        d.provenance.n_observational = 3;
        d.provenance.n_sinks = 1;
        assert!(validate_design(&d).all_passed());
        d.provenance.n_sinks = 2;
        assert!(!validate_design(&d).check("pair-count").unwrap().passed);
    }

    #[test]
    fn potential_records_follow_class() {
        let c = PotentialOutcomes::from_class(ComplianceClass::Complier, 0.0, 5.0);
        assert_eq!((c.r_t, c.r_c), (5.0, 0.0));
        let a = PotentialOutcomes::from_class(ComplianceClass::AlwaysTaker, 0.0, 5.0);
        assert_eq!((a.r_t, a.r_c), (5.0, 5.0));
        let n = PotentialOutcomes::from_class(ComplianceClass::NeverTaker, 0.0, 5.0);
        assert_eq!((n.r_t, n.r_c), (0.0, 0.0));
        assert!(c.is_consistent() && a.is_consistent() && n.is_consistent());
        assert_eq!(ComplianceClass::from_treatments(false, true), None);
    }

    #[test]
    fn population_width_identity() {
        let t = PotentialTable {
            pairs: vec![[
                PotentialOutcomes::from_class(ComplianceClass::Complier, 0.0, 5.0),
                PotentialOutcomes::from_class(ComplianceClass::NeverTaker, 1.0, 3.0),
            ]],
        };
        let (lb, ub) = t.bounds(1.0, 6.0);
        assert_eq!(t.compliance_rate(), 0.5);
        assert!((ub - lb - 5.0 * 0.5).abs() < 1e-15);
    }
}
