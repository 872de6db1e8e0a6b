use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got} ({what})")]
    DimensionMismatch { what: &'static str, expected: usize, got: usize },

    #[error("invalid architecture: {0}")]
    InvalidArch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("index out of range: {what} = {index}, valid range 1..={max}")]
    IndexOutOfRange { what: &'static str, index: usize, max: usize },

    #[error("quadrature tolerance not met: estimate changed by {change:e} > tol {tol:e} at the refinement budget")]
    ToleranceNotMet { change: f64, tol: f64 },

    #[error("empty batch")]
    EmptyBatch,

    #[error("non-finite gradient entry at coordinate {0}")]
    NonFiniteGradient(usize),

    #[error("rejection sampler stalled after {0} attempts")]
    SamplerStall(usize),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn dim(what: &'static str, expected: usize, got: usize) -> Self {
        Error::DimensionMismatch { what, expected, got }
    }
}
