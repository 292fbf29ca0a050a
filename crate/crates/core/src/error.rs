use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse failure class, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("dimension mismatch in task {task}: {detail}")]
    TaskDimension { task: usize, detail: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("task index {index} out of range for {tasks} tasks")]
    TaskIndex { index: usize, tasks: usize },

    #[error("invalid dataset: {0}")]
    Dataset(String),

    #[error("{path}:{line}: {detail}")]
    Parse {
        path: PathBuf,
        line: u64,
        detail: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("linear system of size {size} is singular")]
    Singular { size: usize },

    #[error("linear system of size {size} exceeds the dense cap of {cap}; use the gradient method instead")]
    SystemTooLarge { size: usize, cap: usize },

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("outer iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Parameter(_) => ErrorClass::Config,
            Error::TaskDimension { .. }
            | Error::Dimension(_)
            | Error::TaskIndex { .. }
            | Error::Dataset(_)
            | Error::Parse { .. }
            | Error::Io { .. } => ErrorClass::Data,
            Error::Singular { .. } | Error::SystemTooLarge { .. } | Error::NonFinite(_) => {
                ErrorClass::Numeric
            }
            Error::AtIteration { source, .. } => source.class(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
