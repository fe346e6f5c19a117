use std::path::PathBuf;

use thiserror::Error;

/// Every failure the toolkit reports. Variants follow the error classes of the
/// individual stages so callers (and the CLI exit path) can tell them apart.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("non-finite sample at index {index}")]
    NonFinite { index: u64 },
    #[error("filter design error: {0}")]
    Design(String),
    #[error("coverage error: {0}")]
    Coverage(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("parse error in field `{field}`: {reason}")]
    Parse { field: &'static str, reason: String },
    #[error("invalid connection parameters: {reason} ({params})")]
    Validity { reason: String, params: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Parse {
            field,
            reason: reason.into(),
        }
    }
}
