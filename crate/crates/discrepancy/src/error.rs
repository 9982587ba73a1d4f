use thiserror::Error;

/// Errors surfaced by solvers and partitioners.
#[derive(Debug, Error)]
pub enum Error {
    /// Input violates a documented precondition (dimension mismatch, bad range, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Exhaustive routines refuse instances above their size cap.
    #[error("instance too large: {0}")]
    SizeLimit(String),

    /// An inter-module contract was violated at runtime (signals a bug, not bad input).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A result was requested before the required number of rounds completed.
    #[error("stale state: {0}")]
    Stale(String),

    /// File parsing failed.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
}
