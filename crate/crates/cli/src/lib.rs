//! `wahls` command-line driver and HTTP estimation service.
//!
//! The binary is a thin wrapper over [`run`]; the service router is exposed
//! separately through [`server::router`] so it can be driven in-process.

pub mod cli;
pub mod commands;
pub mod request;
pub mod server;
pub mod settings;

use std::fmt;

pub use cli::Cli;

/// Failure of a subcommand. Usage errors exit with 2, data errors with 1.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Data(e) => write!(f, "{e:#}"),
        }
    }
}

impl<E> From<E> for CliError
where
    E: Into<anyhow::Error>,
{
    fn from(e: E) -> Self {
        CliError::Data(e.into())
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;

pub fn run(cli: Cli) -> CliResult {
    commands::dispatch(cli)
}
