//! Command-line front end for the switchpoint engine: TOML configuration,
//! subcommand implementations and exit-code mapping.

pub mod commands;
pub mod config;
pub mod error;

pub use config::Config;
pub use error::{CliError, CliResult};
