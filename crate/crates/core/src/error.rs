use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: duplicate trace for monitor {monitor} towards {destination}")]
    DuplicateTrace {
        line: usize,
        monitor: String,
        destination: String,
    },

    #[error("unknown monitor {0:?}")]
    UnknownMonitor(String),

    #[error("invalid topology parameters: {0}")]
    InvalidParams(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed stop set encoding: {0}")]
    Codec(String),

    #[error("quantile of an empty sample")]
    EmptySample,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
