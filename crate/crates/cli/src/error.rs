use std::process::ExitCode;

use cat_anova::AnovaError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("{0}")]
    Validation(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            Self::Usage(_) => 1,
            Self::Data(_) | Self::Io { .. } => 2,
            Self::Numerical(_) => 3,
            Self::Validation(_) => 4,
        })
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

impl From<AnovaError> for CliError {
    fn from(err: AnovaError) -> Self {
        match err {
            AnovaError::SolveFailed { .. } | AnovaError::Internal(_) => Self::Numerical(err.to_string()),
            AnovaError::InvalidConfig(_) => Self::Usage(err.to_string()),
            other => Self::Data(other.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
