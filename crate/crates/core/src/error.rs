use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value violates its declared invariant.
    #[error("configuration error: {0}")]
    Config(String),

    /// An operation was called with arguments outside its contract.
    #[error("usage error: {0}")]
    Usage(String),

    /// A topology document could not be parsed.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// The exhaustive solver was asked to search more allocations than its limit.
    #[error("search space of {size} allocations exceeds the limit of {limit}")]
    SearchTooLarge { size: f64, limit: u64 },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
