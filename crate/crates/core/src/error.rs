use thiserror::Error;

/// Errors raised by the toolkit's models and estimators.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An input violated a structural contract (wrong dimension, invalid state).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A scalar argument was outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("reconstruction error: {0}")]
    Reconstruction(String),

    /// The optimizer hit its iteration cap before meeting the convergence test.
    #[error("optimizer did not converge after {iterations} iterations (gradient norm {gradient_norm:.3e})")]
    NonConvergence { iterations: usize, gradient_norm: f64 },

    #[error("zero success probability: {0}")]
    ZeroProbability(String),

    #[error("degenerate model: {0}")]
    DegenerateModel(String),

    #[error("data format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}
