//! Evaluation harness and exploratory analyses: stratified cross-validation,
//! retrieval metrics, PCA, recursive feature elimination and feature-regime
//! ablations.

pub(crate) mod ablation;
mod cv;
mod eval;
mod pca;
mod rfe;

use thiserror::Error;

use crate::learners::LearnError;

pub use ablation::{ablation_csv, ablation_study, AblationRow, Regime, ABLATION_KINDS};
pub use cv::{cross_validate, stratified_kfold, Fold};
pub use eval::{evaluate, predict_all, Confusion, EvalReport, FoldReport, FoldSummary, Metric};
pub use pca::{pca, PcaResult};
pub use rfe::{rfe, RfeResult, RfeStep};

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("class {class} has {have} examples, fewer than k = {k}")]
    TooFewExamples { class: bool, have: usize, k: usize },
    #[error("k must be at least 2, got {0}")]
    InvalidK(usize),
    #[error("data has zero total variance")]
    DegenerateData,
    #[error("requested {requested} components from {available} features")]
    TooManyComponents { requested: usize, available: usize },
    #[error(transparent)]
    Learn(#[from] LearnError),
}
