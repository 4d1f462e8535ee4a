//! Evaluation harness: stratified k-fold splits, joint-label accuracy,
//! mean/spread aggregation over folds, and the delta tables comparing
//! backends and prompt variants.

mod folds;
mod metrics;
mod runner;

pub use folds::{kfold_split, FoldSplit};
pub use metrics::{aggregate_folds, delta_table, joint_accuracy, AccuracyCell, Deltas, FoldStats};
pub use runner::{
    load_dataset, load_dataset_reader, run_eval, DatasetRecord, EvalCell, EvalOptions,
    EvalReport, ReportDelta,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::perception::Scenario;

/// Which model configuration an accuracy cell belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Base,
    FineTuned,
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("cannot split {n} records into {k} folds")]
    TooFewRecords { n: usize, k: usize },
    #[error("need at least 2 fold accuracies to aggregate, got {n}")]
    TooFewFolds { n: usize },
    #[error("input lists must be non-empty")]
    EmptyInput,
    #[error("prediction and truth lists differ in length: {preds} vs {truths}")]
    LengthMismatch { preds: usize, truths: usize },
    #[error("missing accuracy cell for {scenario}: {cell}")]
    MissingCell { scenario: Scenario, cell: String },
    #[error("dataset record {index} ({scene_id}) has no truth labels")]
    MissingTruth { index: usize, scene_id: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Perception(#[from] crate::perception::PerceptionError),
    #[error("report serialisation: {0}")]
    Json(#[from] serde_json::Error),
}
