use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    /// Wrong magic bytes, unsupported version, or malformed header.
    #[error("format error: {0}")]
    Format(String),

    /// Header and payload disagree (record count, vector length, truncation).
    #[error("corrupt file: {0}")]
    Corruption(String),

    /// A value violates a domain invariant (zero vector, NaN, dim mismatch).
    #[error("validation error: {0}")]
    Validation(String),

    #[error("schedule error: {0}")]
    Schedule(String),

    #[error("index {index} out of range (len {len})")]
    Index { index: usize, len: usize },

    #[error("math error: {0}")]
    Math(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("invalid state: {0}")]
    State(String),

    /// A caller broke an operation precondition.
    #[error("contract violated: {0}")]
    Contract(String),

    #[error("range error: {0}")]
    Range(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
