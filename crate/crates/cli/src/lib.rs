//! File formats, configuration and the batch pipeline behind the `ivmatch`
//! command: CSV ingestion, TOML configs with environment overrides,
//! deterministic artifact writers and parallel simulation drivers.

pub mod commands;
pub mod config;
pub mod error;
pub mod ingest;
pub mod output;
pub mod parallel;

pub use commands::Context;
pub use config::PipelineConfig;
pub use error::{CliError, CliResult};
