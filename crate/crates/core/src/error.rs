use thiserror::Error;

use crate::inner::InnerFailure;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of a formula.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),

    /// The inner solver could not produce an acceptable `(x_tilde, v)` pair.
    #[error("inner solver failed: {0}")]
    InnerFailure(InnerFailure),

    /// A quantity the convergence theory guarantees was violated numerically.
    #[error("certificate violation: {0}")]
    Certificate(String),

    #[error("degenerate instance: {0}")]
    DegenerateInstance(String),

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("dataset already scaled")]
    AlreadyScaled,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn check_len(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::Shape {
            context,
            expected,
            actual,
        })
    }
}
