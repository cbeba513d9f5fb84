use std::io;
use std::path::PathBuf;

use crate::format::FormatError;

pub type Result<T, E = AppError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("gradient check failed for: {0}")]
    GradCheck(String),
    #[error("{failed} of {total} sweep runs failed")]
    PartialSweep { failed: usize, total: usize },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{}: {source}", path.display())]
    Format {
        path: PathBuf,
        #[source]
        source: FormatError,
    },
}

impl AppError {
    /// 0 success, 1 config or input, 2 numeric, 3 partial sweep.
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Numeric(_) | AppError::GradCheck(_) => 2,
            AppError::PartialSweep { .. } => 3,
            AppError::Config(_) | AppError::Io { .. } | AppError::Format { .. } => 1,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        AppError::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<contkd_core::Error> for AppError {
    fn from(e: contkd_core::Error) -> Self {
        use contkd_core::Error as E;
        match e {
            E::Numeric { .. } | E::NonFiniteLoss(_) | E::NonFiniteGradient => {
                AppError::Numeric(e.to_string())
            }
            E::Config(msg) => AppError::Config(msg),
            other => AppError::Config(other.to_string()),
        }
    }
}
