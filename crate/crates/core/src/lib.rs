//! Strengthened instrumental-variable matched-pair designs.
//!
//! The crate builds sink-augmented discrepancy matrices, solves the
//! minimum-weight perfect matching exactly, and runs randomization and
//! biased-randomization inference on partial identification bounds.
//! It needs only `alloc`; file formats and the command line live in the
//! `ivmatch` crate.

#![no_std]

extern crate alloc;

pub mod design;
pub mod diagnostics;
pub mod error;
pub mod inference;
pub mod logistic;
pub mod matching;
pub mod model;
pub mod seed;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};
pub use model::{
    validate_design, ComplianceClass, MatchedDesign, MatchedPair, PotentialOutcomes,
    PotentialTable, Provenance, Template, TemplateUnit, Unit,
};
