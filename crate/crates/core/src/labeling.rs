//! Corpus-level approval, top-user flagging, and dataset assembly.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{select_features, FeatureSelector, UserFeatureVector};
use crate::ingest::Post;
use crate::learners::Samples;

#[derive(Debug, Error, PartialEq)]
pub enum LabelError {
    #[error("no users to rank")]
    EmptyCorpus,
    #[error("fraction {0} must lie strictly between 0 and 1")]
    InvalidFraction(f64),
    #[error("target size {0} must be a positive even number")]
    InvalidTarget(usize),
    #[error("need {needed} examples per class, have {positives} positive and {negatives} negative")]
    InsufficientClass {
        needed: usize,
        positives: usize,
        negatives: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserApproval {
    pub user_id: String,
    pub cumulative_approval: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub conversation_id: String,
    pub user_id: String,
    pub features: UserFeatureVector,
    pub is_top: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Evaluation,
    Validation,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub examples: Vec<LabeledExample>,
    pub selector: FeatureSelector,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn new(examples: Vec<LabeledExample>, selector: FeatureSelector, provenance: Provenance) -> Self {
        Self {
            examples,
            selector,
            provenance,
        }
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.examples.iter().filter(|e| e.is_top).count()
    }

    pub fn with_selector(&self, selector: FeatureSelector) -> Self {
        Self {
            selector,
            ..self.clone()
        }
    }

    /// Projects every example through the selector.
    pub fn samples(&self) -> Samples {
        Samples {
            names: self.selector.names(),
            rows: self
                .examples
                .iter()
                .map(|e| select_features(&e.features, &self.selector))
                .collect(),
            labels: self.examples.iter().map(|e| e.is_top).collect(),
        }
    }
}

/// Sums post scores per author.
pub fn cumulative_approval<'a, I>(posts: I) -> BTreeMap<String, UserApproval>
where
    I: IntoIterator<Item = &'a Post>,
{
    let mut out: BTreeMap<String, UserApproval> = BTreeMap::new();
    for p in posts {
        out.entry(p.author_id.clone())
            .or_insert_with(|| UserApproval {
                user_id: p.author_id.clone(),
                cumulative_approval: 0,
            })
            .cumulative_approval += p.score;
    }
    out
}

/// Flags the `floor(fraction * N)` users with the highest approval; ties go
/// to the lexicographically smaller user id.
pub fn flag_top_users<'a, I>(approvals: I, fraction: f64) -> Result<BTreeSet<String>, LabelError>
where
    I: IntoIterator<Item = &'a UserApproval>,
{
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(LabelError::InvalidFraction(fraction));
    }
    let mut ranked: Vec<&UserApproval> = approvals.into_iter().collect();
    if ranked.is_empty() {
        return Err(LabelError::EmptyCorpus);
    }
    ranked.sort_by(|a, b| {
        b.cumulative_approval
            .cmp(&a.cumulative_approval)
            .then_with(|| a.user_id.cmp(&b.user_id))
    });
    let cut = (fraction * ranked.len() as f64).floor() as usize;
    Ok(ranked[..cut].iter().map(|u| u.user_id.clone()).collect())
}

/// Joins per-conversation feature vectors with the corpus-level top flags.
pub fn label_examples(
    features: &[(String, UserFeatureVector)],
    top: &BTreeSet<String>,
) -> Vec<LabeledExample> {
    features
        .iter()
        .map(|(conversation_id, f)| LabeledExample {
            conversation_id: conversation_id.clone(),
            user_id: f.user_id.clone(),
            is_top: top.contains(&f.user_id),
            features: f.clone(),
        })
        .collect()
}

/// Seeded class-balanced sample without replacement: `target_size / 2`
/// examples of each class, shuffled together.
pub fn balance_dataset(
    examples: &[LabeledExample],
    target_size: usize,
    seed: u64,
    selector: FeatureSelector,
) -> Result<Dataset, LabelError> {
    if target_size == 0 || !target_size.is_multiple_of(2) {
        return Err(LabelError::InvalidTarget(target_size));
    }
    let half = target_size / 2;
    let (pos, neg): (Vec<&LabeledExample>, Vec<&LabeledExample>) = examples.iter().partition(|e| e.is_top);
    if pos.len() < half || neg.len() < half {
        return Err(LabelError::InsufficientClass {
            needed: half,
            positives: pos.len(),
            negatives: neg.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<LabeledExample> = Vec::with_capacity(target_size);
    for class in [&pos, &neg] {
        let mut chosen = index::sample(&mut rng, class.len(), half).into_vec();
        chosen.sort_unstable();
        picked.extend(chosen.into_iter().map(|i| class[i].clone()));
    }
    picked.shuffle(&mut rng);
    Ok(Dataset::new(picked, selector, Provenance::Evaluation))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn post(author: &str, score: i64) -> Post {
        Post {
            post_id: format!("{author}{score}"),
            conversation_id: "c".into(),
            author_id: author.into(),
            parent_id: None,
            body: String::new(),
            timestamp: 0,
            score,
            ordinal: 0,
        }
    }

    fn approvals(values: &[(&str, i64)]) -> Vec<UserApproval> {
        values
            .iter()
            .map(|(u, a)| UserApproval {
                user_id: u.to_string(),
                cumulative_approval: *a,
            })
            .collect()
    }

    fn example(user: &str, is_top: bool) -> LabeledExample {
        LabeledExample {
            conversation_id: "c".into(),
            user_id: user.into(),
            features: UserFeatureVector {
                user_id: user.into(),
                ..Default::default()
            },
            is_top,
        }
    }

    #[test]
    fn sums() {
        let posts = [post("a", 5), post("b", 3), post("a", -2), post("b", 0), post("a", 10)];
        let m = cumulative_approval(&posts);
        assert_eq!(m["a"].cumulative_approval, 13);
        assert_eq!(m["b"].cumulative_approval, 3);
        let zero = cumulative_approval(&[post("z", 0)]);
        assert_eq!(zero["z"].cumulative_approval, 0);
    }

    #[test]
    fn flag_counts() {
        let users: Vec<_> = (0..100).map(|i| (format!("u{i:03}"), i as i64)).collect();
        let refs: Vec<_> = users.iter().map(|(u, a)| (u.as_str(), *a)).collect();
        let top = flag_top_users(&approvals(&refs), 0.05).unwrap();
        assert_eq!(top.len(), 5);
        assert!(top.contains("u099") && top.contains("u095") && !top.contains("u094"));

        let ten: Vec<_> = (0..10).map(|i| (format!("u{i}"), 1)).collect();
        let refs: Vec<_> = ten.iter().map(|(u, a)| (u.as_str(), *a)).collect();
        assert!(flag_top_users(&approvals(&refs), 0.05).unwrap().is_empty());
    }

    #[test]
    fn ties_go_to_smallest_ids() {
        let users: Vec<_> = (0..40).rev().map(|i| (format!("u{i:02}"), 7)).collect();
        let refs: Vec<_> = users.iter().map(|(u, a)| (u.as_str(), *a)).collect();
        let top = flag_top_users(&approvals(&refs), 0.05).unwrap();
        assert_eq!(top.into_iter().collect::<Vec<_>>(), vec!["u00", "u01"]);
    }

    #[test]
    fn flag_errors() {
        assert_eq!(flag_top_users(&[], 0.05), Err(LabelError::EmptyCorpus));
        let one = approvals(&[("a", 1)]);
        assert_eq!(flag_top_users(&one, 0.0), Err(LabelError::InvalidFraction(0.0)));
        assert_eq!(flag_top_users(&one, 1.0), Err(LabelError::InvalidFraction(1.0)));
    }

    #[test]
    fn balance_small() {
        let ex = vec![example("a", true), example("b", false), example("c", true), example("d", false)];
        let d = balance_dataset(&ex, 4, 1, FeatureSelector::full()).unwrap();
        let mut users: Vec<_> = d.examples.iter().map(|e| e.user_id.as_str()).collect();
        users.sort();
        assert_eq!(users, vec!["a", "b", "c", "d"]);
    }

    #[test]
    fn balance_errors() {
        let ex: Vec<_> = (0..3)
            .map(|i| example(&format!("p{i}"), true))
            .chain((0..20).map(|i| example(&format!("n{i}"), false)))
            .collect();
        assert!(matches!(
            balance_dataset(&ex, 10, 1, FeatureSelector::full()),
            Err(LabelError::InsufficientClass { .. })
        ));
        assert_eq!(
            balance_dataset(&ex, 5, 1, FeatureSelector::full()),
            Err(LabelError::InvalidTarget(5))
        );
    }

    #[test]
    fn balance_large_is_even_and_reproducible() {
        let ex: Vec<_> = (0..4000)
            .map(|i| example(&format!("p{i}"), true))
            .chain((0..9000).map(|i| example(&format!("n{i}"), false)))
            .collect();
        let a = balance_dataset(&ex, 7000, 42, FeatureSelector::full()).unwrap();
        assert_eq!(a.len(), 7000);
        assert_eq!(a.positives(), 3500);
        let b = balance_dataset(&ex, 7000, 42, FeatureSelector::full()).unwrap();
        assert_eq!(a, b);
        let c = balance_dataset(&ex, 7000, 43, FeatureSelector::full()).unwrap();
        assert_ne!(a, c);
    }
}
