//! Training, metrics, bootstrap resampling and cross-validation.

mod cv;
pub mod metrics;
mod report;
mod train;

pub use cv::{cross_validate, CvResult, FoldResult};
pub use metrics::{all_metrics, auprc, auroc, min_se_pplus, METRIC_NAMES};
pub use report::{bootstrap_eval, format_mean_std, EvalReport, MetricSummary};
pub use train::{
    derive_seed, fit, fit_holdout, train, EpochRecord, HoldoutRun, TrainConfig, TrainingLog,
};
