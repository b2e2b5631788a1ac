use std::path::{Path, PathBuf};

use thiserror::Error;
use vehicle_core::io::FormatError;

/// Exit status for malformed input files.
pub const EXIT_FORMAT: i32 = 2;
/// Exit status for well-formed input that fails validation.
pub const EXIT_VALIDATION: i32 = 3;
pub const EXIT_OTHER: i32 = 1;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Format {
        path: PathBuf,
        #[source]
        source: FormatError,
    },
    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{0}")]
    Validation(String),
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
            CliError::Format {
                source: FormatError::Io(_),
                ..
            } => EXIT_OTHER,
            CliError::Format { .. } | CliError::Parse { .. } => EXIT_FORMAT,
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Io { .. } => EXIT_OTHER,
        }
    }

    pub fn format(path: &Path, source: FormatError) -> Self {
        CliError::Format {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        CliError::Validation(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
