use std::path::PathBuf;

use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("input file not found: {}", .0.display())]
    MissingInput(PathBuf),

    #[error("column {column:?} not found in {}", path.display())]
    MissingColumn { column: String, path: PathBuf },

    #[error("row {row}, column {column:?}: cannot parse {value:?} as a number")]
    NonNumericCell { row: usize, column: String, value: String },

    #[error("{} holds no data rows", .0.display())]
    EmptyDataset(PathBuf),

    #[error("unit id {0:?} appears more than once")]
    DuplicateId(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("subgroup {0:?} selects no pairs")]
    EmptySubgroup(String),

    #[error(transparent)]
    Analysis(#[from] ivmatch_core::Error),

    #[error("I/O error on {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error("CSV error in {}: {source}", path.display())]
    Csv { path: PathBuf, source: csv::Error },
}

pub type CliResult<T> = Result<T, CliError>;

/// Machine-readable error record printed on failure.
#[derive(Debug, Serialize)]
pub struct ErrorReport {
    pub kind: &'static str,
    pub message: String,
    pub exit_code: i32,
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    pub fn kind(&self) -> &'static str {
        use ivmatch_core::Error as E;
        match self {
            CliError::MissingInput(_) => "MissingInput",
            CliError::MissingColumn { .. } => "MissingColumn",
            CliError::NonNumericCell { .. } => "NonNumericCell",
            CliError::EmptyDataset(_) => "EmptyDataset",
            CliError::DuplicateId(_) => "DuplicateId",
            CliError::Config(_) => "Config",
            CliError::EmptySubgroup(_) => "EmptySubgroup",
            CliError::Io { .. } => "Io",
            CliError::Csv { .. } => "Csv",
            CliError::Analysis(e) => match e {
                E::DegenerateCovariance => "DegenerateCovariance",
                E::SeparationDetected { .. } => "SeparationDetected",
                E::ConfigInfeasible(_) => "ConfigInfeasible",
                E::OddDimension(_) => "OddDimension",
                E::TooLarge(_) => "TooLarge",
                E::StructuralViolation(_) => "StructuralViolation",
                E::ZeroVariance => "ZeroVariance",
                E::LeverageOne(_) => "LeverageOne",
                E::ZeroDenominator => "ZeroDenominator",
                E::AllZeroGaps => "AllZeroGaps",
                E::MissingDosePool => "MissingDosePool",
                E::InvalidArgument(_) => "InvalidArgument",
                E::InsufficientData(_) => "InsufficientData",
            },
        }
    }

    /// 1 for analysis failures, 2 for usage and input problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Analysis(_) | CliError::EmptySubgroup(_) => 1,
            _ => 2,
        }
    }

    pub fn report(&self) -> ErrorReport {
        ErrorReport {
            kind: self.kind(),
            message: self.to_string(),
            exit_code: self.exit_code(),
        }
    }
}
