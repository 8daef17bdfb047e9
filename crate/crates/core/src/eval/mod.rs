//! Evaluation protocols (stratified k-fold, repeated holdout), metrics and
//! reporting.

mod experiment;
mod metrics;
mod report;
mod splits;

pub use experiment::{
    derive_seed, featurize, run_ablation_grid, run_experiment, run_on_features, run_task, AblationCell,
    AblationReport, ExperimentOptions, ExperimentSetup, FittedModel, FoldReport, MeanMetrics, Prediction, Role,
    TaskReport, ABLATION_CELLS,
};
pub use metrics::{compute_auc, roc_curve, trapezoid_area, Confusion, MetricSet, THRESHOLD};
pub use report::{
    emit_roc, read_roc, render_ablation_table, render_task_table, strip_wall_clock, DesignFlags, ExperimentReport,
    TOOL_VERSION,
};
pub use splits::{holdout_counts, make_splits, Split, SplitKind, SplitPlan};

use thiserror::Error;

use crate::features::FeatureError;
use crate::nn::NnError;
use crate::preprocess::PreprocessError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("both classes are required")]
    SingleClass,
    #[error("too few subjects: {n}, need at least {need}")]
    TooSmall { n: usize, need: usize },
    #[error("invalid split plan: {0}")]
    InvalidPlan(String),
    #[error("subject {0:?} has samples with different labels")]
    MixedSubjectLabels(String),
    #[error("score is NaN")]
    InvalidScore,
    #[error("empty dataset")]
    EmptyDataset,
    #[error("ablation grid incomplete for {0}")]
    IncompleteGrid(String),
    #[error("malformed ROC file: {0}")]
    MalformedRoc(String),
    #[error("fold {fold}: {source}")]
    Fold { fold: usize, source: Box<EvalError> },
    #[error("{subject_id}/{task_id}: {source}")]
    Sample { subject_id: String, task_id: String, source: Box<EvalError> },
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl EvalError {
    /// The innermost error, past fold and sample context.
    pub fn root(&self) -> &EvalError {
        match self {
            EvalError::Fold { source, .. } | EvalError::Sample { source, .. } => source.root(),
            other => other,
        }
    }
}
