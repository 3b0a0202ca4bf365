//! Experiment runner for the `fedigw` simulator: TOML configs describing a
//! grid of methods and seeds, executed in parallel, with CSV outputs and a
//! manifest that reproduces them.

pub mod config;
pub mod error;
pub mod output;
pub mod runner;

pub use config::{method_name, parse_config, parse_config_str, ExperimentConfig, Method};
pub use error::{CliError, CliResult};
pub use runner::{dry_run, jobs, run_experiment, Job, Report};
