use std::path::{Path, PathBuf};

use thiserror::Error;

/// Failure of a CLI run, mapped onto the documented exit codes.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),

    #[error("{file}:{line}: {message}")]
    Config { file: PathBuf, line: usize, message: String },

    #[error("{file}:{line}: {message}")]
    Parse { file: PathBuf, line: usize, message: String },

    #[error("numerical failure: {0}")]
    Numerical(#[from] ferrocirc::Error),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config { .. } | CliError::Io { .. } => 2,
            CliError::Parse { .. } => 3,
            CliError::Numerical(ferrocirc::Error::Config(_) | ferrocirc::Error::InvalidParameter { .. }) => 2,
            CliError::Numerical(_) => 4,
        }
    }

    pub fn io(path: &Path) -> impl FnOnce(std::io::Error) -> Self + '_ {
        move |source| CliError::Io { path: path.to_path_buf(), source }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// 1-based line of a byte offset.
pub fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}
