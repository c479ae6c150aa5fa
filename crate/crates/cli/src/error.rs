use std::path::PathBuf;

use thiserror::Error;

/// Validation problems exit with 2, runtime failures with 3.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("{0}")]
    Validation(String),

    #[error("missing path {}: {what}", path.display())]
    MissingPath { path: PathBuf, what: String },

    #[error("stale artifact {}: manifest records sha256 {expected}, file has sha256 {actual}", path.display())]
    Stale {
        path: PathBuf,
        expected: String,
        actual: String,
    },

    #[error(transparent)]
    Runtime(#[from] sgmus::Error),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. }
            | CliError::Validation(_)
            | CliError::MissingPath { .. }
            | CliError::Stale { .. } => 2,
            CliError::Runtime(_) | CliError::Io { .. } => 3,
        }
    }

    pub(crate) fn config(field: impl Into<String>, message: impl std::fmt::Display) -> Self {
        CliError::Config {
            field: field.into(),
            message: message.to_string(),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
