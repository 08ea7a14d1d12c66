//! CLI error taxonomy, mapped onto process exit codes.

use conic_scatter_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Configuration or invocation problem (exit code 1).
    #[error("usage error: {0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}
