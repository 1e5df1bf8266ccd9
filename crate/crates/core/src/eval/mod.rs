//! Metrics and the experiment runner.

mod classifier;
mod experiment;
mod metrics;
mod table;

pub use classifier::{
    accuracy, fit_classifier, loss_and_gradient, FitOutcome, Hyperparameters, LinearClassifier,
};
pub use experiment::{
    run_experiment, DatasetSource, DatasetSpec, ExperimentConfig, ExperimentOutcome, OutputPaths,
    PairSides, PreprocessStage, SyntheticSpec, TaskKind,
};
pub use metrics::{average_precision, pair_task_score, scores_to_ap_percent, ScoredPair};
pub use table::{
    improvement, round_half_up_2, CellFailure, Metric, ReferenceRow, ResultRow, ResultTable,
    BASELINE,
};

use thiserror::Error;

use crate::datasets::DatasetError;
use crate::embed::EmbedError;
use crate::enrich::EnrichError;
use crate::provider::ConfigError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("average precision needs at least one positive and one negative")]
    DegenerateLabels,
    #[error("classifier needs at least two distinct labels")]
    SingleLabel,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("label {0:?} is not in the classifier's label set")]
    UnknownLabel(String),
    #[error("score for pair {0} is not finite")]
    NonFiniteScore(String),
    #[error("nothing to evaluate")]
    Empty,
    #[error("invalid experiment: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Enrich(#[from] EnrichError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}
