//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid range: lo ({lo}) > hi ({hi})")]
    InvalidRange { lo: f64, hi: f64 },

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("index error: {0}")]
    IndexError(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("config error in field `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("solver did not reach optimality: {0}")]
    SolverFailure(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
