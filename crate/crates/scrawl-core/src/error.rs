//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the pipeline stages.
#[derive(Debug, Error)]
pub enum Error {
    /// A malformed record in the letter file; `line` is 1-based.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Word assembly or emission slicing found inconsistent structure.
    #[error("structural error: {0}")]
    Structure(String),

    /// An argument violated an operation's preconditions.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A bitmap operation that needs at least one active pixel got none.
    #[error("empty region: bitmap has no active pixels")]
    EmptyRegion,

    /// Feature dimensions of two matrices do not agree.
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    /// Model training could not complete.
    #[error("model error: {0}")]
    Model(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
