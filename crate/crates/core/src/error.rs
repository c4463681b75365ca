//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("label collision: `{0}` appears in both operands")]
    LabelCollision(String),

    #[error("unknown subsystem label `{0}`")]
    UnknownLabel(String),

    #[error("empty keep set for partial trace")]
    EmptyKeepSet,

    #[error("invalid layout: {0}")]
    InvalidLayout(String),

    #[error("validation failed ({invariant}): {detail}")]
    Validation {
        invariant: &'static str,
        detail: String,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("parse error at line {line}, column {col}: {msg}")]
    Parse { line: usize, col: usize, msg: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
