use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("type space too large to enumerate: {count} types exceeds cap {cap}")]
    Intractable { count: u128, cap: u128 },

    #[error("inconsistent distributions: {0}")]
    Inconsistent(String),

    #[error("scheme is unverifiable (V = {0} nats)")]
    Unverifiable(f64),

    #[error("empty grid")]
    EmptyGrid,

    #[error("need at least {needed} negative scores for P_fp = {pfp}, got {got}")]
    InsufficientNegatives { needed: usize, got: usize, pfp: f64 },

    #[error("vector norm {0} is not 1")]
    NotUnitNorm(f64),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
