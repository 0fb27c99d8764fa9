//! Error types shared across the solver.

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument fell outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration field failed validation. `path` is the JSON path of
    /// the offending field, e.g. `params.alpha`.
    #[error("invalid config at `{path}`: {message}")]
    Invalid { path: String, message: String },

    /// A documented precondition of an operation does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// A table section that must be strictly monotone is not.
    #[error("section (z={z}, k={k}) is not strictly monotone at index {idx}")]
    NonMonotone { z: usize, k: usize, idx: usize },

    /// Fixed-point iteration hit the iteration cap. Carries the gap history
    /// so the caller can inspect the decay.
    #[error("no convergence after {iterations} iterations (last gap {last_gap:e})")]
    NoConvergence {
        iterations: usize,
        last_gap: f64,
        gaps: Vec<f64>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("artifact error: {0}")]
    Artifact(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Invalid {
            path: path.into(),
            message: message.into(),
        }
    }
}
