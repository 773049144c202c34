use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate basis: {0}")]
    DegenerateBasis(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("index out of bounds: {0}")]
    OutOfBounds(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("schema violation in {path}: {message}")]
    Schema { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Stable, machine-parsable identifier used by the CLI error line.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) => "E_INVALID_PARAMETER",
            Error::InvalidState(_) => "E_INVALID_STATE",
            Error::InvalidInput(_) => "E_INVALID_INPUT",
            Error::DegenerateBasis(_) => "E_DEGENERATE_BASIS",
            Error::DimensionMismatch(_) => "E_DIMENSION_MISMATCH",
            Error::OutOfBounds(_) => "E_OUT_OF_BOUNDS",
            Error::Parse { .. } => "E_PARSE",
            Error::Schema { .. } => "E_SCHEMA",
            Error::Io { .. } => "E_IO",
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
