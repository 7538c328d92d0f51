//! Experiment runner for the viana laboratory: configuration, experiments
//! and output artifacts.

pub mod config;
pub mod experiments;
pub mod output;

pub use config::{ConfigError, Experiment, ExperimentConfig, Format};
pub use experiments::{assertion_keys, run, Outcome};
