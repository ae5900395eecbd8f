//! Metrics, run configuration and the cached end-to-end pipeline.

mod config;
mod metrics;
mod pipeline;

pub use config::{RunConfig, Strategy};
pub use metrics::{confusion, report, ConfusionMatrix, EvalReport};
pub use pipeline::{comparison_table, run_all, run_pipeline, Pipeline, RunLock, StrategyResult};
