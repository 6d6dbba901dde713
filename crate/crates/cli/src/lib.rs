//! Library side of the command-line front end: config parsing, CSV/JSON
//! exports, SVG rendering and the built-in smoke suite.

use std::fmt;

pub mod config;
pub mod export;
pub mod selftest;
pub mod svg;

/// Front-end error with an exit-code taxonomy: configuration problems exit
/// with 2, infeasibility aborts with 3, I/O failures with 4.
#[derive(Debug)]
pub enum CliError {
    Config { field: String, message: String },
    Infeasible(String),
    Io(std::io::Error),
    Internal(String),
}

impl CliError {
    pub fn config(field: &str, message: &str) -> Self {
        CliError::Config {
            field: field.to_string(),
            message: message.to_string(),
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Infeasible(_) => 3,
            CliError::Io(_) => 4,
            CliError::Internal(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config { field, message } => {
                write!(f, "config field `{}`: {}", field, message)
            }
            CliError::Infeasible(msg) => write!(f, "infeasible: {}", msg),
            CliError::Io(err) => write!(f, "io error: {}", err),
            CliError::Internal(msg) => write!(f, "internal error: {}", msg),
        }
    }
}

impl std::error::Error for CliError {}

impl From<almpc_core::Error> for CliError {
    fn from(err: almpc_core::Error) -> Self {
        match err {
            almpc_core::Error::Config { field, message } => CliError::Config { field, message },
            almpc_core::Error::MpcInfeasible { .. } => CliError::Infeasible(err.to_string()),
            almpc_core::Error::InitialTrajectoryInfeasible(_) => {
                CliError::Infeasible(err.to_string())
            }
            almpc_core::Error::EmptyParameterSet(_) => CliError::Infeasible(err.to_string()),
            other => CliError::Internal(other.to_string()),
        }
    }
}
