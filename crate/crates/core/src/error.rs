use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// The file is not in a format this build understands (bad magic, version, dtype).
    #[error("format error: {0}")]
    Format(String),

    /// The payload ended early or contains inconsistent data.
    #[error("corrupt data at byte offset {offset}: {message}")]
    Corrupt { offset: u64, message: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("vocabulary error: {0}")]
    Vocabulary(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("index build failed: {0}")]
    Build(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Failures collected across many documents, keyed by document id.
    #[error("{} document(s) failed; first: doc {}: {}", .0.len(), .0[0].0, .0[0].1)]
    Documents(Vec<(u64, Error)>),

    #[error("metadata error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
