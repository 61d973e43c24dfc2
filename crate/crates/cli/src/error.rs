//! Process-level errors mapped onto exit codes.
//!
//! 0 success, 1 a check suite reported failures, 2 usage or config
//! problems, 3 runtime numerical failures.

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{path}:{line}:{col}: {message}")]
    Parse { path: PathBuf, line: usize, col: usize, message: String },

    #[error("invalid value for '{key}': {message}")]
    Validation { key: String, message: String },

    #[error(transparent)]
    Numerical(#[from] micromag::Error),

    #[error("{0} check(s) failed")]
    ChecksFailed(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Parse { .. } | CliError::Validation { .. } => 2,
            CliError::ChecksFailed(_) => 1,
            CliError::Numerical(_) | CliError::Io(_) => 3,
        }
    }

    /// Short machine-readable tag for error records written to disk.
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Parse { .. } => "parse",
            CliError::Validation { .. } => "validation",
            CliError::Numerical(_) => "numerical",
            CliError::ChecksFailed(_) => "checks-failed",
            CliError::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
