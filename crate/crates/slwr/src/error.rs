//! Command errors and their process exit codes.

use std::fmt;

use slwr_core::Error;

pub const EXIT_OK: u8 = 0;
pub const EXIT_VALIDATION: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
    pub source: Option<Error>,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_CONFIG,
            message: message.into(),
            source: None,
        }
    }

    pub fn validation(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_VALIDATION,
            message: message.into(),
            source: None,
        }
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_NUMERICAL,
            message: message.into(),
            source: None,
        }
    }

    pub fn io(what: &str, path: &std::path::Path, e: impl fmt::Display) -> Self {
        CliError::config(format!("{what} {}: {e}", path.display()))
    }
}

/// Exit code for a core error.
pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Domain { .. }
        | Error::Config(_)
        | Error::StabilityBound { .. }
        | Error::UnderResolved { .. }
        | Error::IndexOutOfRange { .. }
        | Error::UnsupportedFlux(_)
        | Error::ScaleTooLarge { .. } => EXIT_CONFIG,
        Error::SimulationDiverged { .. }
        | Error::SolverIntegrity(_)
        | Error::InsufficientData(_)
        | Error::OutOfCoverage { .. }
        | Error::Transport { .. }
        | Error::NonFiniteScore { .. }
        | Error::TrainingDiverged { .. } => EXIT_NUMERICAL,
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError {
            code: exit_code(&e),
            message: e.to_string(),
            source: Some(e),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}
