use std::path::Path;

use seqtr_core::Error as CoreError;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const VALIDATION: i32 = 1;
    pub const IO: i32 = 2;
    pub const NUMERICAL: i32 = 3;
    pub const GOLDEN: i32 = 4;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),

    #[error("{path}: {message}")]
    Io { path: String, message: String },

    #[error("{path}, line {line}: {message}")]
    Parse { path: String, line: u64, message: String },

    #[error("{0}")]
    Numerical(String),

    #[error("golden mismatch: {0}")]
    Golden(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) | CliError::Parse { .. } => exit::VALIDATION,
            CliError::Io { .. } => exit::IO,
            CliError::Numerical(_) => exit::NUMERICAL,
            CliError::Golden(_) => exit::GOLDEN,
        }
    }

    pub fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Io { path: path.display().to_string(), message: err.to_string() }
    }

    pub fn parse(path: &Path, line: u64, message: impl Into<String>) -> Self {
        CliError::Parse { path: path.display().to_string(), line, message: message.into() }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Convergence { .. } | CoreError::Singular(_) | CoreError::Internal(_) => {
                CliError::Numerical(e.to_string())
            }
            _ => CliError::Validation(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
