use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("validation failed: {0}")]
    Validation(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("{kind} payload of dimension {size} exceeds the cap of {cap}")]
    CapExceeded {
        kind: &'static str,
        size: usize,
        cap: usize,
    },

    /// A structural hypothesis of a construction does not hold for the input
    /// (non-commuting observables, singular alternative state, ...).
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
