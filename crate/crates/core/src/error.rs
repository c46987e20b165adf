use thiserror::Error;

/// Errors raised by the solver and its building blocks.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("point outside the interior of the domain: {0}")]
    Domain(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("symmetric positive-definite factorization failed: {0}")]
    Factorization(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid complexity regime: {0}")]
    InvalidRegime(String),

    #[error("no step size down to {min_sigma:e} satisfies the {regime} rule")]
    BisectionFailed { regime: &'static str, min_sigma: f64 },

    #[error("trace too short: {have} iterations, need at least {need}")]
    InsufficientTrace { have: usize, need: usize },

    #[error("no outer iteration has been recorded")]
    EmptyState,

    #[error("singular linear system")]
    SingularSystem,

    #[error("problem too large for the reference solver: {0}")]
    Scale(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn dimension(msg: impl Into<String>) -> Error {
    Error::Dimension(msg.into())
}
