//! Command-line driver: JSON run configs, CSV artifacts and benchmark presets.

pub mod bench;
pub mod commands;
pub mod config;
pub mod output;

use std::fmt;

/// Failure classes of the command-line tool, mapped to exit codes.
#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    /// Bad config, arguments or input files (exit 1).
    Config(String),
    /// The solver or sampler failed (exit 2).
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Runtime(m) => write!(f, "{m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<pdfevo::Error> for CliError {
    fn from(e: pdfevo::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}
