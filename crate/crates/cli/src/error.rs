use std::path::Path;

use thiserror::Error;

/// Failure classes of the command-line tool, each with its own exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Malformed input file or invalid flag combination.
    #[error("{0}")]
    Input(String),
    /// The estimation failed outright.
    #[error("{0}")]
    Fit(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 3,
            CliError::Fit(_) => 4,
            CliError::Io { .. } => 5,
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// Exit code when outputs were written but the computation did not converge.
pub const EXIT_NOT_CONVERGED: i32 = 4;

pub type CliResult<T> = std::result::Result<T, CliError>;
