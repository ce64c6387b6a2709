use std::path::Path;

use thiserror::Error;

/// Errors surfaced by commands, grouped by process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Invalid or missing configuration; exit code 2.
    #[error("config error: {0}")]
    Config(String),
    /// The sampler or the training loop produced non-finite values; exit code 3.
    #[error("numerical divergence: {0}")]
    Divergence(String),
    /// Unreadable or malformed files; exit code 4.
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Divergence(_) => 3,
            CliError::Io(_) => 4,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{}: {err}", path.display()))
    }
}

impl From<plrdiff_core::Error> for CliError {
    fn from(err: plrdiff_core::Error) -> Self {
        use plrdiff_core::Error as E;
        match err {
            E::Divergence { .. } | E::Training { .. } => CliError::Divergence(err.to_string()),
            E::Shape(_) | E::Parameter { .. } | E::Capability(_) => CliError::Config(err.to_string()),
        }
    }
}
