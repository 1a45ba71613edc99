//! Experiment harness for safe leveling bandits: JSON configuration,
//! parallel replications, CSV/JSON reports and the command-line front end.
//!
//! The algorithms themselves live in `safe-leveling-core`.

pub mod config;
pub mod error;
pub mod experiment;
pub mod report;
pub mod snapshot;

pub use config::ExperimentConfig;
pub use error::CliError;
pub use experiment::{run_experiment, Experiment, RunSummary};
pub use report::emit_reports;
