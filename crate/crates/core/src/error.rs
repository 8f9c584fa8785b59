use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not symmetric (max asymmetry {asymmetry:.3e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("matrix is not positive definite (pivot {pivot} = {value:.3e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("design matrix is singular")]
    SingularDesign,

    #[error("Hessian is singular along the Newton path")]
    SingularHessian,

    #[error("Newton iteration did not converge after {iterations} iterations")]
    NonConvergence { iterations: usize },

    #[error("invalid use: {0}")]
    Misuse(String),

    #[error("index {index} out of range 1..={len}")]
    Index { index: usize, len: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
