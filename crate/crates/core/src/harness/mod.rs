//! End-to-end experiments against simulated annotators: config, query
//! planning, metrics and traces.

mod config;
mod run;
mod synthetic;
mod trace;

pub use config::{
    AnnotatorConfig, AnnotatorKind, ExperimentConfig, ItemSelection, PolicyConfig, PolicyKind, PoolSource,
    PriorConfig, ResponseConfig,
};
pub use run::{
    evaluate_accuracy, interactions_to_mse, mse_to_gt, run_experiment, EvalSet, Experiment, ExperimentOutcome,
    Learner, PlannedQuery, QueryPlanner, Truth, DEFAULT_SYNTHETIC_NOISE,
};
pub use synthetic::SyntheticTask;
pub use trace::{export_trace, import_trace, read_trace, write_trace, TraceRecord, TRACE_FORMAT, TRACE_VERSION};
