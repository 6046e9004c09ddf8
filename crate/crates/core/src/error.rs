use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A variable carries no information (all counts zero, or zero variance
    /// where a variance is required).
    #[error("uninformative variable `{name}`: {reason}")]
    UninformativeVariable { name: String, reason: String },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn at_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Process exit code for the command-line front end.
    ///
    /// 2 input error, 3 numerical failure, 4 configuration error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Stage { source, .. } => source.exit_code(),
            Error::NumericalFailure(_) => 3,
            Error::Config(_) | Error::InvalidParameter(_) => 4,
            Error::InvalidInput(_)
            | Error::UninformativeVariable { .. }
            | Error::Parse { .. }
            | Error::Io { .. } => 2,
        }
    }
}
