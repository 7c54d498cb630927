//! Metrics, the shared per-instance pipeline and the experiment runner.

mod experiment;
mod metrics;
mod pipeline;

pub use experiment::{
    mean_sem, run_experiment, AggregateRow, ExperimentReport, ExperimentSpec, InstanceSource, MetricsRow,
    RunRecord, CSV_COLUMNS,
};
pub use metrics::{gini, nash_welfare, normalized_returns};
pub use pipeline::{Prepared, RuleSpec, SampleOptions, DEFAULT_SAMPLES, RULE_NAMES};
