//! Discrepancy matrix construction: rank-based Mahalanobis distances,
//! soft calipers, and sink rows for template matching.

mod config;
mod mahalanobis;
mod matrix;
mod propensity;

pub use config::DesignConfig;
pub use mahalanobis::RankMahalanobis;
pub use matrix::{build_discrepancy_matrix, DiscrepancyMatrix, Vertex};
pub use propensity::{fit_propensity, PropensityLabel};

use crate::error::Result;
use crate::model::{MatchedDesign, Template, Unit};

/// Builds the discrepancy matrix, solves the optimal matching and extracts
/// the design, recording `config` in the provenance. Matrix warnings are
/// returned alongside.
pub fn match_units(
    units: &[Unit],
    template: Option<&Template>,
    config: &DesignConfig,
) -> Result<(MatchedDesign, alloc::vec::Vec<alloc::string::String>)> {
    let matrix = build_discrepancy_matrix(units, template, config)?;
    let pairing = crate::matching::min_weight_perfect_matching(&matrix)?;
    let mut design = crate::matching::extract_design(&pairing, &matrix, units, template)?;
    design.provenance.config = Some(config.clone());
    Ok((design, matrix.warnings))
}
