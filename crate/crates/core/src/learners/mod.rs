//! Binary classifiers over dense feature rows.
//!
//! Every learner produces a [`TrainedModel`], a self-describing envelope that
//! serializes to versioned JSON. Training is deterministic for a fixed seed:
//! the serialized model is byte-identical across runs.

mod cit;
mod forest;
mod nb;
mod svm;
mod tree;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cit::CondTreeParams;
pub use forest::ForestParams;
pub use nb::NaiveBayesParams;
pub use svm::SvmParams;
pub use tree::{Node, Tree};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum LearnError {
    #[error("training data holds a single class")]
    SingleClass,
    #[error("need at least {needed} examples, have {got}")]
    TooFewExamples { needed: usize, got: usize },
    #[error("expected {expected} features, got {got}")]
    ArityMismatch { expected: usize, got: usize },
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparams(String),
    #[error("unknown model kind `{0}`")]
    UnknownKind(String),
    #[error("unsupported model format version {0}")]
    UnsupportedVersion(u32),
    #[error("model envelope is inconsistent: {0}")]
    Inconsistent(String),
}

/// Row-major design matrix with boolean labels (`true` = top user).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Samples {
    pub names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<bool>,
}

impl Samples {
    pub fn new(names: Vec<String>, rows: Vec<Vec<f64>>, labels: Vec<bool>) -> Self {
        debug_assert_eq!(rows.len(), labels.len());
        Self { names, rows, labels }
    }

    /// Generic column names `x0, x1, ...`.
    pub fn unnamed(rows: Vec<Vec<f64>>, labels: Vec<bool>) -> Self {
        let d = rows.first().map_or(0, Vec::len);
        Self::new((0..d).map(|i| format!("x{i}")).collect(), rows, labels)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.names.len()
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&y| y).count()
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            names: self.names.clone(),
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    pub fn select_columns(&self, cols: &[usize]) -> Self {
        Self {
            names: cols.iter().map(|&j| self.names[j].clone()).collect(),
            rows: self
                .rows
                .iter()
                .map(|r| cols.iter().map(|&j| r[j]).collect())
                .collect(),
            labels: self.labels.clone(),
        }
    }

    /// Column-major copy, `columns()[j][i]` is feature `j` of row `i`.
    pub(crate) fn columns(&self) -> Vec<Vec<f64>> {
        (0..self.n_features())
            .map(|j| self.rows.iter().map(|r| r[j]).collect())
            .collect()
    }

    fn require_both_classes(&self) -> Result<(), LearnError> {
        let pos = self.positives();
        if pos == 0 || pos == self.len() {
            Err(LearnError::SingleClass)
        } else {
            Ok(())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    GaussianNb,
    CondTree,
    RandomForest,
    LinearSvm,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::GaussianNb,
        ModelKind::CondTree,
        ModelKind::RandomForest,
        ModelKind::LinearSvm,
    ];

    pub fn short_name(self) -> &'static str {
        match self {
            ModelKind::GaussianNb => "nb",
            ModelKind::CondTree => "cit",
            ModelKind::RandomForest => "rf",
            ModelKind::LinearSvm => "svm",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for ModelKind {
    type Err = LearnError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "nb" | "gaussian_nb" => Ok(ModelKind::GaussianNb),
            "cit" | "cond_tree" => Ok(ModelKind::CondTree),
            "rf" | "random_forest" => Ok(ModelKind::RandomForest),
            "svm" | "linear_svm" => Ok(ModelKind::LinearSvm),
            other => Err(LearnError::UnknownKind(other.to_string())),
        }
    }
}

/// Training knobs shared by all learners. The defaults are this crate's own
/// choices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    pub nb_var_floor: f64,
    pub tree_alpha: f64,
    pub tree_min_leaf: usize,
    pub tree_permutations: usize,
    pub forest_trees: usize,
    /// Features tried per split; `None` means `ceil(sqrt(d))`.
    pub forest_mtry: Option<usize>,
    pub svm_lambda: f64,
    pub svm_epochs: usize,
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            nb_var_floor: 1e-9,
            tree_alpha: 0.05,
            tree_min_leaf: 7,
            tree_permutations: 999,
            forest_trees: 100,
            forest_mtry: None,
            svm_lambda: 1e-4,
            svm_epochs: 100,
            seed: 0,
        }
    }
}

impl Hyperparams {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), LearnError> {
        let bad = |what: &str| Err(LearnError::InvalidHyperparams(what.to_string()));
        if !(self.nb_var_floor > 0.0) {
            return bad("nb_var_floor must be positive");
        }
        if !(self.tree_alpha > 0.0 && self.tree_alpha <= 1.0) {
            return bad("tree_alpha must lie in (0, 1]");
        }
        if self.tree_min_leaf == 0 || self.tree_permutations == 0 {
            return bad("tree_min_leaf and tree_permutations must be positive");
        }
        if self.forest_trees == 0 || self.forest_mtry == Some(0) {
            return bad("forest_trees and forest_mtry must be positive");
        }
        if !(self.svm_lambda > 0.0) || self.svm_epochs == 0 {
            return bad("svm_lambda and svm_epochs must be positive");
        }
        Ok(())
    }

    pub fn mtry(&self, d: usize) -> usize {
        self.forest_mtry
            .unwrap_or_else(|| (d as f64).sqrt().ceil() as usize)
            .clamp(1, d.max(1))
    }
}

/// Per-feature z-score parameters learned on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    /// Population standard deviation; constant features get 1.
    pub stddev: Vec<f64>,
}

impl Standardization {
    pub fn fit(samples: &Samples) -> Self {
        let n = samples.len().max(1) as f64;
        let d = samples.n_features();
        let mut mean = vec![0.0; d];
        for r in &samples.rows {
            for (m, x) in mean.iter_mut().zip(r) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for r in &samples.rows {
            for ((v, x), m) in var.iter_mut().zip(r).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let stddev = var
            .into_iter()
            .map(|v| {
                let s = (v / n).sqrt();
                if s > 1e-12 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, stddev }
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .zip(self.mean.iter().zip(&self.stddev))
            .map(|(x, (m, s))| (x - m) / s)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectorInfo {
    pub name: String,
    pub members: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parameters {
    GaussianNb(NaiveBayesParams),
    CondTree(CondTreeParams),
    RandomForest(ForestParams),
    LinearSvm(SvmParams),
}

impl Parameters {
    pub fn kind(&self) -> ModelKind {
        match self {
            Parameters::GaussianNb(_) => ModelKind::GaussianNb,
            Parameters::CondTree(_) => ModelKind::CondTree,
            Parameters::RandomForest(_) => ModelKind::RandomForest,
            Parameters::LinearSvm(_) => ModelKind::LinearSvm,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub seed: u64,
    pub hyperparams: Hyperparams,
    /// Caller-supplied logical timestamp; 0 unless set explicitly.
    pub timestamp: i64,
    pub n_examples: usize,
    pub n_positive: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format_version: u32,
    pub kind: ModelKind,
    pub selector: SelectorInfo,
    pub standardization: Standardization,
    pub parameters: Parameters,
    pub train_meta: TrainMeta,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: bool,
    /// Posterior, vote fraction, or sigmoid of the margin, in `[0, 1]`.
    pub score: f64,
}

impl TrainedModel {
    pub fn arity(&self) -> usize {
        self.selector.members.len()
    }

    pub fn predict(&self, v: &[f64]) -> Result<Prediction, LearnError> {
        if v.len() != self.arity() {
            return Err(LearnError::ArityMismatch {
                expected: self.arity(),
                got: v.len(),
            });
        }
        Ok(match &self.parameters {
            Parameters::GaussianNb(p) => p.predict(v),
            Parameters::CondTree(p) => p.predict(v),
            Parameters::RandomForest(p) => p.predict(v),
            Parameters::LinearSvm(p) => p.predict(&self.standardization.apply(v)),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelLoadError> {
        let model: TrainedModel = serde_json::from_str(text)?;
        if model.format_version != FORMAT_VERSION {
            return Err(LearnError::UnsupportedVersion(model.format_version).into());
        }
        if model.kind != model.parameters.kind() {
            return Err(LearnError::Inconsistent(format!(
                "kind {} but {} parameters",
                model.kind,
                model.parameters.kind()
            ))
            .into());
        }
        let d = model.arity();
        if model.standardization.mean.len() != d || model.standardization.stddev.len() != d {
            return Err(LearnError::Inconsistent("standardization arity".into()).into());
        }
        Ok(model)
    }
}

#[derive(Debug, Error)]
pub enum ModelLoadError {
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Learn(#[from] LearnError),
}

pub fn train(kind: ModelKind, data: &Samples, hp: &Hyperparams) -> Result<TrainedModel, LearnError> {
    match kind {
        ModelKind::GaussianNb => train_gaussian_nb(data, hp),
        ModelKind::CondTree => train_cond_tree(data, hp),
        ModelKind::RandomForest => train_random_forest(data, hp),
        ModelKind::LinearSvm => train_linear_svm(data, hp),
    }
}

fn envelope(data: &Samples, hp: &Hyperparams, standardization: Standardization, parameters: Parameters) -> TrainedModel {
    TrainedModel {
        format_version: FORMAT_VERSION,
        kind: parameters.kind(),
        selector: SelectorInfo {
            name: String::new(),
            members: data.names.clone(),
        },
        standardization,
        parameters,
        train_meta: TrainMeta {
            seed: hp.seed,
            hyperparams: hp.clone(),
            timestamp: 0,
            n_examples: data.len(),
            n_positive: data.positives(),
        },
    }
}

fn check_input(data: &Samples, hp: &Hyperparams) -> Result<(), LearnError> {
    hp.validate()?;
    data.require_both_classes()?;
    if let Some(bad) = data.rows.iter().find(|r| r.len() != data.n_features()) {
        return Err(LearnError::ArityMismatch {
            expected: data.n_features(),
            got: bad.len(),
        });
    }
    Ok(())
}

pub fn train_gaussian_nb(data: &Samples, hp: &Hyperparams) -> Result<TrainedModel, LearnError> {
    check_input(data, hp)?;
    let params = nb::fit(data, hp.nb_var_floor);
    Ok(envelope(data, hp, Standardization::fit(data), Parameters::GaussianNb(params)))
}

pub fn train_cond_tree(data: &Samples, hp: &Hyperparams) -> Result<TrainedModel, LearnError> {
    check_input(data, hp)?;
    let needed = 2 * hp.tree_min_leaf;
    if data.len() < needed {
        return Err(LearnError::TooFewExamples {
            needed,
            got: data.len(),
        });
    }
    let params = cit::fit(data, hp);
    Ok(envelope(data, hp, Standardization::fit(data), Parameters::CondTree(params)))
}

pub fn train_random_forest(data: &Samples, hp: &Hyperparams) -> Result<TrainedModel, LearnError> {
    check_input(data, hp)?;
    let params = forest::fit(data, hp);
    Ok(envelope(data, hp, Standardization::fit(data), Parameters::RandomForest(params)))
}

pub fn train_linear_svm(data: &Samples, hp: &Hyperparams) -> Result<TrainedModel, LearnError> {
    check_input(data, hp)?;
    let standardization = Standardization::fit(data);
    let params = svm::fit(data, &standardization, hp);
    Ok(envelope(data, hp, standardization, Parameters::LinearSvm(params)))
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
