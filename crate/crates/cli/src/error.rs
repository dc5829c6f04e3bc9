use std::path::Path;

/// Failures surfaced by the command-line tool, split by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags, config, model or input files. Exit code 2.
    #[error("{0}")]
    Config(String),
    /// Non-convergence, divergence or another numeric failure. Exit code 3.
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    pub fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Config(format!("{}: {err}", path.display()))
    }
}

impl From<aput_core::Error> for CliError {
    fn from(e: aput_core::Error) -> Self {
        use aput_core::Error as E;
        match e {
            E::Config(_) | E::InvalidModel(_) | E::LengthMismatch { .. } | E::Ingest { .. } => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
