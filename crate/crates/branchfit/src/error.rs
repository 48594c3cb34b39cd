use std::io;
use std::path::PathBuf;

use branchfit_core::Error as CoreError;

/// Process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitCode {
    Ok = 0,
    Input = 2,
    Numeric = 3,
    Io = 4,
}

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },
    #[error("{path}: grid file is corrupt ({msg})")]
    Corrupt { path: PathBuf, msg: String },
    #[error("{path}: unsupported grid format version {found:?} (expected {expected:?})")]
    Version {
        path: PathBuf,
        found: String,
        expected: &'static str,
    },
    #[error("invalid input: {0}")]
    Input(String),
    #[error(transparent)]
    Core(#[from] CoreError),
}

impl AppError {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        AppError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> ExitCode {
        match self {
            AppError::Io { .. } => ExitCode::Io,
            AppError::Format { .. } | AppError::Corrupt { .. } | AppError::Version { .. } | AppError::Input(_) => {
                ExitCode::Input
            }
            AppError::Core(e) => match e.root() {
                CoreError::InvalidConfig(_)
                | CoreError::Domain { .. }
                | CoreError::NonPositiveCount { .. }
                | CoreError::ProportionalGaussian
                | CoreError::GridRequired
                | CoreError::EmptyWindow(_)
                | CoreError::InsufficientTrajectories { .. } => ExitCode::Input,
                _ => ExitCode::Numeric,
            },
        }
    }
}

pub type Result<T, E = AppError> = std::result::Result<T, E>;
