use alloc::string::String;
use alloc::vec::Vec;

/// Errors raised by the design, matching, inference and simulation layers.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("rank-based covariance is degenerate: every covariate column is constant")]
    DegenerateCovariance,

    #[error("logistic fit separated the classes; scores were clamped to [1e-6, 1 - 1e-6]")]
    SeparationDetected { clamped_scores: Vec<f64> },

    #[error("design configuration is infeasible: {0}")]
    ConfigInfeasible(String),

    #[error("matching requires an even number of vertices, got {0}")]
    OddDimension(usize),

    #[error("brute-force enumeration is limited to 12 vertices, got {0}")]
    TooLarge(usize),

    #[error("structural violation in the optimal pairing: {0}")]
    StructuralViolation(String),

    #[error("all pair statistics are identical; the variance estimate is zero")]
    ZeroVariance,

    #[error("a pair-level covariate row has leverage one (row {0})")]
    LeverageOne(usize),

    #[error("the instrument has no net effect on treatment in this design")]
    ZeroDenominator,

    #[error("every matched pair has a zero dose gap")]
    AllZeroGaps,

    #[error("no dose pool was supplied")]
    MissingDosePool,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("not enough data: {0}")]
    InsufficientData(String),
}

pub type Result<T> = core::result::Result<T, Error>;
