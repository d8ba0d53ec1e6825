use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cv::cross_validate;
use super::eval::FoldSummary;
use super::AnalysisError;
use crate::features::{Feature, FeatureSelector};
use crate::labeling::Dataset;
use crate::learners::{Hyperparams, ModelKind};

/// Feature regimes compared by the ablation, from least to most graph-aware.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Post counts only.
    NoGraph,
    /// Post counts plus attack degree features.
    AttackOnly,
    Full,
}

impl Regime {
    pub const ALL: [Regime; 3] = [Regime::NoGraph, Regime::AttackOnly, Regime::Full];

    pub fn name(self) -> &'static str {
        match self {
            Regime::NoGraph => "no_graph",
            Regime::AttackOnly => "attack_only",
            Regime::Full => "full",
        }
    }

    pub fn selector(self) -> FeatureSelector {
        use Feature::*;
        match self {
            Regime::NoGraph => FeatureSelector::custom(self.name(), vec![PostCount, Coverage]),
            Regime::AttackOnly => FeatureSelector::custom(
                self.name(),
                vec![PostCount, Coverage, AttIn, AttOut, AvgAttIn, AvgAttOut],
            ),
            Regime::Full => FeatureSelector::full(),
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub const ABLATION_KINDS: [ModelKind; 3] = [ModelKind::CondTree, ModelKind::RandomForest, ModelKind::LinearSvm];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub regime: Regime,
    pub classifier: ModelKind,
    pub accuracy: f64,
    pub fold_accuracy: Option<FoldSummary>,
}

/// Cross-validates cond_tree, random_forest and linear_svm under each regime.
/// Rows are ordered by regime, then classifier.
pub fn ablation_study(data: &Dataset, hp: &Hyperparams, k: usize, seed: u64) -> Result<Vec<AblationRow>, AnalysisError> {
    let cells: Vec<(Regime, ModelKind)> = Regime::ALL
        .iter()
        .flat_map(|&r| ABLATION_KINDS.iter().map(move |&c| (r, c)))
        .collect();
    cells
        .par_iter()
        .map(|&(regime, classifier)| {
            let samples = data.with_selector(regime.selector()).samples();
            let report = cross_validate(classifier, &samples, hp, k, seed)?;
            Ok(AblationRow {
                regime,
                classifier,
                accuracy: report.accuracy,
                fold_accuracy: report.fold_accuracy,
            })
        })
        .collect()
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut out = String::from("regime,classifier,accuracy\n");
    for r in rows {
        out.push_str(&format!("{},{},{}\n", r.regime, r.classifier.short_name(), r.accuracy));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::UserFeatureVector;
    use crate::labeling::{LabeledExample, Provenance};

    #[test]
    fn regimes_nest() {
        let a = Regime::NoGraph.selector().members;
        let b = Regime::AttackOnly.selector().members;
        let c = Regime::Full.selector().members;
        assert!(a.iter().all(|f| b.contains(f)));
        assert!(b.iter().all(|f| c.contains(f)));
        assert_eq!((a.len(), b.len(), c.len()), (2, 6, 19));
    }

    #[test]
    fn three_rows_per_classifier() {
        // the label is visible only through defence in-degree
        let examples: Vec<LabeledExample> = (0..80)
            .map(|i| {
                let top = i % 2 == 0;
                let mut v = [0.0; 19];
                v[0] = (i % 5) as f64 + 1.0;
                v[1] = 0.1;
                v[4] = if top { 3.0 } else { 0.0 } + (i % 3) as f64 * 0.1;
                LabeledExample {
                    conversation_id: "c".into(),
                    user_id: format!("u{i}"),
                    features: UserFeatureVector::from_values(format!("u{i}"), &v),
                    is_top: top,
                }
            })
            .collect();
        let data = Dataset::new(examples, FeatureSelector::full(), Provenance::Synthetic);
        let hp = Hyperparams {
            forest_trees: 20,
            ..Hyperparams::with_seed(1)
        };
        let rows = ablation_study(&data, &hp, 5, 1).unwrap();
        assert_eq!(rows.len(), 9);
        for kind in ABLATION_KINDS {
            let mine: Vec<&AblationRow> = rows.iter().filter(|r| r.classifier == kind).collect();
            assert_eq!(mine.len(), 3);
            let full = mine.iter().find(|r| r.regime == Regime::Full).unwrap().accuracy;
            let none = mine.iter().find(|r| r.regime == Regime::NoGraph).unwrap().accuracy;
            assert!(full >= none + 0.3, "{kind}: {full} vs {none}");
        }
        assert!(ablation_csv(&rows).starts_with("regime,classifier,accuracy\nno_graph,cit,"));
    }
}
