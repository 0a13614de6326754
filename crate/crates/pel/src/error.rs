use std::path::PathBuf;

use thiserror::Error;

/// A configuration problem tied to a line of the config text. Line 0 means
/// the offending value is a default.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct ConfigError {
    pub line: usize,
    pub message: String,
}

impl ConfigError {
    pub fn at(line: usize, message: impl Into<String>) -> Self {
        Self {
            line,
            message: message.into(),
        }
    }
}

/// A malformed CSV cell or row. `column` is 1-based; 0 means the whole row.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("row {row}, column {column}: {message}")]
pub struct CsvError {
    pub row: usize,
    pub column: usize,
    pub message: String,
}

#[derive(Debug, Error)]
pub enum PelError {
    #[error("{}: {source}", path.display())]
    Config { path: PathBuf, source: ConfigError },
    #[error("{}: {source}", path.display())]
    Csv { path: PathBuf, source: CsvError },
    #[error("{0}")]
    Usage(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Core(#[from] pel_core::Error),
    #[error("{0}")]
    Format(String),
}

impl PelError {
    /// Process exit code: 2 for usage and configuration problems, 1 for
    /// failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            PelError::Config { .. } | PelError::Csv { .. } | PelError::Usage(_) => 2,
            PelError::Core(pel_core::Error::Config(_)) => 2,
            _ => 1,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        PelError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, PelError>;
