//! Training, evaluation and the experiment protocols.

mod config;
mod optim;
mod protocols;
mod report;
mod train;

pub use config::{ExperimentConfig, TrainConfig};
pub use optim::{clip_grad_norm, Adam};
pub use protocols::{
    compare_architectures, head_losses, matched_specs, run_once, run_principle_verification, sweep, HeadLosses, PrincipleReport,
    PrincipleSeed, SweepAxis,
};
pub use report::{normalized_loss, win_count, ComparisonReport, LabelSummary, PairSummary, ReportRow, RunResult, REPORT_SCHEMA_VERSION};
pub use train::{evaluate, objective, train, EpochRecord, RunMetrics, METRICS_SCHEMA_VERSION};
