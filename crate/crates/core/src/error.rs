use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed URL: {0:?}")]
    MalformedUrl(String),

    #[error("no registrable domain for host {0:?}")]
    UnresolvableSuffix(String),

    #[error("malformed cookie: {0:?}")]
    MalformedCookie(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        /// 1-based line number, or entry index for HAR input.
        line: usize,
        message: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("infeasible synthetic parameters: {0}")]
    InfeasibleParams(String),

    #[error("event references missing transaction (user {user:?}, seq {seq})")]
    DanglingEvent { user: String, seq: u64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
