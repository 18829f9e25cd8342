//! Training orchestration, robustness evaluation and reporting.

mod config;
mod evaluate;
mod report;
mod train;

pub use config::{read_config, RunConfig};
pub use evaluate::{empirical_cdf, evaluate, mean_std, EvalReport, EvalSettings, ScaleReport};
pub use report::{cdf_csv, metrics_csv, scale_label, summary_csv, write_reports, MetricRow};
pub use train::{run, run_observed, train, train_observed, RunOutput, TrainOutcome};
