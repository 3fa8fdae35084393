//! Command implementations behind the `jointqa` binary: dataset ingestion,
//! retrieval, multi-stage training into run directories, prediction,
//! evaluation, hyperparameter sweeps and the toy transfer experiment.

pub mod commands;
pub mod config;
pub mod experiment;
pub mod manifest;
pub mod presets;

pub use commands::*;
pub use config::{EvaluationConfig, Overrides, RunConfig};
pub use manifest::{MetricSummary, RunManifest, RunStatus};
