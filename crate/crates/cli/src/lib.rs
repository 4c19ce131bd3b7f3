//! Configuration, orchestration and output for the `kdv` command.

pub mod config;
pub mod experiment;

pub use config::{ConfigError, RawConfig, RunConfig};
pub use experiment::{
    compare_experiment, run_experiment, sweep, ExitStatus, OutputError, RunSummary,
};
