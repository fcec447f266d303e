use thiserror::Error;

/// Errors raised by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid tree: {0}")]
    InvalidTree(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("enumeration of {what} needs {count} items, cap is {cap}")]
    CapExceeded { what: &'static str, count: u128, cap: u128 },

    #[error("leaf {leaf} is unreachable for this observation")]
    InfeasibleTarget { leaf: usize },

    #[error("no item has a usable split threshold")]
    NoSplitAvailable,

    #[error("scenario generation stalled: separated scenario already present after {iterations} iterations")]
    ConvergenceStall { iterations: usize },

    #[error("degenerate variance in correlation input")]
    DegenerateVariance,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
