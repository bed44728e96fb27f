//! CLI error type with the process exit-code mapping: 2 for input problems,
//! 3 for numerical failures.

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Core(ribreg_core::Error),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        CliError::Input(message.into())
    }

    pub fn numeric(message: impl Into<String>) -> Self {
        CliError::Numeric(message.into())
    }

    /// Exit code: 0 success (not represented here), 2 input error,
    /// 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numeric(_) => 3,
            _ => 2,
        }
    }

    /// Machine-parsable category for the diagnostic stream.
    pub fn category(&self) -> &'static str {
        match self {
            CliError::Numeric(_) => "numeric",
            _ => "input",
        }
    }
}

impl From<ribreg_core::Error> for CliError {
    fn from(e: ribreg_core::Error) -> Self {
        CliError::Core(e)
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
