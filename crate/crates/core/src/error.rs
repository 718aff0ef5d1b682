use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// The reference dictionary (or an iterate) is not full rank.
    #[error("rank deficient matrix: smallest singular value {sigma_min:e} (largest {sigma_max:e})")]
    RankDeficient { sigma_min: f64, sigma_max: f64 },

    #[error("matrix is not a valid Gram matrix: {0}")]
    InvalidGram(String),

    #[error("columns are not unit norm: column {column} has norm {norm}")]
    NotUnitNorm { column: usize, norm: f64 },

    /// Subset enumeration would be too large; use the sandwich bounds instead.
    #[error("dimension {m} exceeds the enumeration cap {cap} for {what}; use the approximation bounds instead")]
    TooLarge { what: &'static str, m: usize, cap: usize },

    #[error("dual norm solver did not converge within {iterations} iterations (best gap {gap:e})")]
    NotConverged { iterations: usize, gap: f64 },

    #[error("direction is not tangent: residual {residual:e} on column {column}")]
    NotTangent { column: usize, residual: f64 },

    #[error("no sign change of the margin within the bracket [{lo}, {hi}]")]
    NoSignChange { lo: f64, hi: f64 },

    #[error("margin condition not met: {0}")]
    MarginNotMet(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidParameter(msg.into()))
}
