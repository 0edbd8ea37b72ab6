//! Command-line driver for the private consensus simulator.

pub mod commands;
pub mod config;

pub use commands::{CliError, CliResult};
pub use config::{load_config, parse_config, ConfigError, ExperimentConfig};
