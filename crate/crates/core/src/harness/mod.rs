//! Experiment harness: configuration, the per-seed pipeline, the
//! sensitivity, correlation and rate studies, and SVG output.

pub mod config;
pub mod pipeline;
pub mod plot;
pub mod studies;

pub use config::{BetaKind, DatasetKind, ExperimentConfig, Family, Method, LAMBDA_GRID};
pub use pipeline::{run_experiment, run_instance, run_seed, ResultTable, SeedRun};
pub use studies::{rate_check, run_correlation, run_sensitivity};
