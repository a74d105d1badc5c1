use thiserror::Error;

/// Errors produced by the operator-learning library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Orders below 1 give quasi-norms with non-convex balls.
    #[error("unsupported Schatten/lp order {0} (need p >= 1)")]
    UnsupportedOrder(f64),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("{what} did not converge within {iterations} iterations")]
    NoConvergence { what: &'static str, iterations: usize },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_err(msg: impl Into<String>) -> Error {
    Error::Shape(msg.into())
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
