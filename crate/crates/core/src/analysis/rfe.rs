//! Recursive feature elimination driven by random-forest importances.

use serde::{Deserialize, Serialize};

use super::cv::cross_validate;
use super::AnalysisError;
use crate::learners::{train_random_forest, Hyperparams, ModelKind, Parameters, Samples};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfeStep {
    pub features: Vec<String>,
    pub cv_accuracy: f64,
    /// Forest importances aligned with `features`.
    pub importances: Vec<f64>,
    /// Feature dropped after this step; `None` for the final singleton.
    pub eliminated: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfeResult {
    /// Nested subsets, largest first.
    pub steps: Vec<RfeStep>,
    pub best: Vec<String>,
    pub best_accuracy: f64,
}

impl RfeResult {
    pub fn final_feature(&self) -> Option<&str> {
        self.steps.last().and_then(|s| s.features.first()).map(String::as_str)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("size,cv_accuracy,eliminated,features\n");
        for s in &self.steps {
            out.push_str(&format!(
                "{},{},{},{}\n",
                s.features.len(),
                s.cv_accuracy,
                s.eliminated.as_deref().unwrap_or(""),
                s.features.join(";")
            ));
        }
        out
    }
}

pub fn rfe(data: &Samples, hp: &Hyperparams, k_folds: usize, seed: u64) -> Result<RfeResult, AnalysisError> {
    let mut columns: Vec<usize> = (0..data.n_features()).collect();
    let mut steps = Vec::with_capacity(columns.len());
    while !columns.is_empty() {
        let subset = data.select_columns(&columns);
        let report = cross_validate(ModelKind::RandomForest, &subset, hp, k_folds, seed)?;
        let model = train_random_forest(&subset, hp)?;
        let Parameters::RandomForest(forest) = &model.parameters else {
            unreachable!("random forest training returns forest parameters")
        };
        let importances = forest.importances.clone();
        // lowest importance goes; ties drop the later column
        let weakest = (0..columns.len())
            .rev()
            .min_by(|&a, &b| importances[a].total_cmp(&importances[b]))
            .filter(|_| columns.len() > 1);
        steps.push(RfeStep {
            features: subset.names.clone(),
            cv_accuracy: report.accuracy,
            importances,
            eliminated: weakest.map(|w| subset.names[w].clone()),
        });
        match weakest {
            Some(w) => {
                columns.remove(w);
            }
            None => break,
        }
    }
    // ties go to the smaller subset, which comes later
    let best = steps
        .iter()
        .rev()
        .max_by(|a, b| a.cv_accuracy.total_cmp(&b.cv_accuracy).then(b.features.len().cmp(&a.features.len())))
        .expect("at least one feature");
    Ok(RfeResult {
        best: best.features.clone(),
        best_accuracy: best.cv_accuracy,
        steps,
    })
}
