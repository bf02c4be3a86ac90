//! Cross-validated experiment runner: fold plans, per-fold segmentation,
//! training and scoring of every variant, and report files.

mod config;
mod experiment;
mod folds;
mod report;

pub use config::{ExperimentConfig, CONFIG_VERSION};
pub use experiment::{
    dataset_hash, decode_actions, evaluate_checkpoint, fit_segmentation, job_dir, prepare_fold, run_experiment, run_folds, run_job,
    write_job, write_run_header, write_segmentation, AttentionRecord,
    Checkpoint, FoldContext, Generation, JobOutput, Segmentation,
};
pub use folds::{make_folds, Fold, FoldPlan};
pub use report::{load_bundle, report, write_report, ActionSummary, ResultBundle, RunHeader};
