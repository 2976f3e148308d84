//! Pipeline commands behind the `pickopt` binary. Each command reads its
//! inputs, never modifies them, and writes its outputs atomically.

pub mod commands;
pub mod config;
mod io;

pub use commands::*;
pub use config::RunConfig;

/// Failure classes, each with its own process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data format error: {0}")]
    Format(String),
    #[error("runtime failure: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Format(_) => 3,
            CliError::Runtime(_) => 4,
        }
    }
}

impl From<pickopt::Error> for CliError {
    fn from(e: pickopt::Error) -> Self {
        use pickopt::Error as E;
        match e {
            E::Config { .. } | E::InvalidArgument(_) => CliError::Config(e.to_string()),
            E::Format(_) | E::Json(_) | E::DimensionMismatch { .. } => CliError::Format(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}
