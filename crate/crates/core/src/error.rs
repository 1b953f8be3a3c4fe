use std::path::PathBuf;

use thiserror::Error;

use crate::network::CaseError;
use crate::powerflow::GridError;
use crate::profile::ProfileError;
use crate::radial::RadialError;
use crate::replacement::EvaluationError;

/// Any failure of the end-to-end pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Case(#[from] CaseError),
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Radial(#[from] RadialError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Evaluation(#[from] EvaluationError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed artifact: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("inconsistent inputs: {0}")]
    Inconsistent(String),
    #[error("cannot start worker pool: {0}")]
    ThreadPool(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 invalid input, 3 numerical failure, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Case(CaseError::Io(_)) | Error::Profile(ProfileError::Io(_)) => 4,
            Error::Case(_) | Error::Profile(_) | Error::Radial(_) => 2,
            Error::Grid(GridError::PowerFlow(_)) | Error::Grid(GridError::EmptyRadialSet) => 3,
            Error::Grid(_) => 2,
            Error::Evaluation(_) => 3,
            Error::Io { .. } | Error::ThreadPool(_) => 4,
            Error::Json { .. } | Error::Inconsistent(_) => 2,
        }
    }
}
