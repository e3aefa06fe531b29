use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Penalties and constants shaping the discrepancy matrix.
///
/// A caliper with zero penalty is inactive. `big_const` and `inf_const`
/// are derived from the data when left unset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignConfig {
    /// Smallest desired within-pair dose gap.
    pub dose_caliper: f64,
    /// Penalty per unit of dose-gap shortfall.
    pub dose_penalty: f64,
    pub ps_caliper: f64,
    pub ps_penalty: f64,
    /// Width of the reverse caliper on template-membership scores.
    pub gen_caliper: f64,
    pub gen_penalty: f64,
    pub big_const: Option<f64>,
    pub inf_const: Option<f64>,
    /// Exact-key names; the values live in [`Unit::exact_keys`](crate::Unit).
    pub exact_match: Vec<String>,
}

impl Default for DesignConfig {
    fn default() -> Self {
        DesignConfig {
            dose_caliper: 0.0,
            dose_penalty: 0.0,
            ps_caliper: 0.0,
            ps_penalty: 0.0,
            gen_caliper: 0.0,
            gen_penalty: 0.0,
            big_const: None,
            inf_const: None,
            exact_match: Vec::new(),
        }
    }
}

impl DesignConfig {
    /// Dose-gap shortfall caliper only.
    pub fn with_dose_caliper(caliper: f64, penalty: f64) -> Self {
        DesignConfig {
            dose_caliper: caliper,
            dose_penalty: penalty,
            ..DesignConfig::default()
        }
    }

    pub fn check(&self) -> Result<()> {
        let named = [
            ("dose_caliper", self.dose_caliper),
            ("dose_penalty", self.dose_penalty),
            ("ps_caliper", self.ps_caliper),
            ("ps_penalty", self.ps_penalty),
            ("gen_caliper", self.gen_caliper),
            ("gen_penalty", self.gen_penalty),
        ];
        for (name, v) in named {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidArgument(alloc::format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        for (name, v) in [("big_const", self.big_const), ("inf_const", self.inf_const)] {
            if let Some(v) = v {
                if !v.is_finite() || v <= 0.0 {
                    return Err(Error::InvalidArgument(alloc::format!(
                        "{name} must be finite and positive, got {v}"
                    )));
                }
            }
        }
        Ok(())
    }

    #[inline]
    pub(crate) fn dose_term(&self, gap: f64) -> f64 {
        self.dose_penalty * (self.dose_caliper - gap).max(0.0)
    }

    #[inline]
    pub(crate) fn ps_term(&self, diff: f64) -> f64 {
        self.ps_penalty * (diff - self.ps_caliper).max(0.0)
    }

    #[inline]
    pub(crate) fn gen_term(&self, diff: f64) -> f64 {
        self.gen_penalty * (self.gen_caliper - diff).max(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn penalty_terms() {
        let c = DesignConfig::with_dose_caliper(15.0, 100.0);
        assert_eq!(c.dose_term(30.0), 0.0);
        assert_eq!(c.dose_term(10.0), 500.0);
        let mut c = DesignConfig::default();
        c.ps_caliper = 0.1;
        c.ps_penalty = 10.0;
        assert!((c.ps_term(0.3) - 2.0).abs() < 1e-12);
        assert_eq!(c.ps_term(0.05), 0.0);
    }

    #[test]
    fn negative_penalty_rejected() {
        let c = DesignConfig::with_dose_caliper(15.0, -1.0);
        assert!(c.check().is_err());
        assert!(DesignConfig::default().check().is_ok());
    }
}
