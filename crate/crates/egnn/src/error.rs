use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{path}: invalid graph record {record}: {message}")]
    Record {
        path: String,
        record: usize,
        message: String,
    },
    #[error("{0}")]
    Json(#[from] serde_json::Error),
    #[error("{what}: {message}")]
    Format { what: &'static str, message: String },
    #[error("fingerprint mismatch for {what}: expected {expected:016x}, found {found:016x}")]
    Fingerprint {
        what: &'static str,
        expected: u64,
        found: u64,
    },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] egnn_core::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(what: &'static str, message: impl Into<String>) -> Self {
        Error::Format {
            what,
            message: message.into(),
        }
    }
}
