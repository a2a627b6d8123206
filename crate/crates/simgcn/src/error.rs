use std::process::ExitCode;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AppError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl AppError {
    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        AppError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            AppError::Config(_) => 2,
            AppError::Data(_) | AppError::Io { .. } => 3,
            AppError::Numeric(_) => 4,
        })
    }
}

impl From<simgcn_core::Error> for AppError {
    fn from(e: simgcn_core::Error) -> Self {
        match e {
            simgcn_core::Error::NonFinite(_) | simgcn_core::Error::Oracle { .. } => {
                AppError::Numeric(e.to_string())
            }
            other => AppError::Data(other.to_string()),
        }
    }
}
