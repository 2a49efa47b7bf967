//! Crate-wide error type.
//!
//! Variants are grouped so a caller (the CLI in particular) can map them onto
//! its exit-code contract: configuration problems, IO problems, and numeric
//! faults are distinguishable without string matching.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A kernel was invoked with non-conforming shapes.
    #[error("shape mismatch in {kernel}: {detail}")]
    ShapeMismatch { kernel: &'static str, detail: String },

    /// A kernel produced NaN or Inf.
    #[error("numeric fault in {context}: non-finite value at index {index}")]
    NumericFault { context: String, index: usize },

    /// Tape misuse: non-scalar backward root or double backward.
    #[error("tape error: {0}")]
    Tape(String),

    /// Embedding-vector precondition violated (zero norm, antipodal pair,
    /// parameter out of range).
    #[error("embedding error: {0}")]
    Embedding(String),

    /// An annotation record breaches its own invariants. Distinct from a
    /// filter rejection, which is a normal outcome.
    #[error("malformed record {image_id}: {detail}")]
    MalformedRecord { image_id: String, detail: String },

    /// Sequence assembly precondition violated (overlapping spans,
    /// dimension mismatch, overlong sequence).
    #[error("sequence error: {0}")]
    Sequence(String),

    /// Invalid configuration value.
    #[error("config error: {0}")]
    Config(String),

    /// Binary format problems: bad magic, unsupported version, truncation,
    /// dangling references.
    #[error("format error in {path}: {detail}")]
    Format { path: String, detail: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn format(path: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Format { path: path.into(), detail: detail.into() }
    }
}
