//! Batch driver for the `chc-core` experiments: config parsing, dispatch
//! and artifact output.

pub mod config;
pub mod run;

pub use config::{parse_config, parse_config_for, ConfigError, Experiment, RunConfig};
pub use run::{run, Completed, RunError};
