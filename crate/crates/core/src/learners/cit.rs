//! Conditional-inference style tree.
//!
//! Variable selection and split search are separated. At every node each
//! feature gets a Monte-Carlo permutation test of its association with the
//! class; the statistic is the absolute standardized mean difference between
//! the two classes. The feature with the smallest Bonferroni-adjusted p-value
//! is split, but only when that p-value is at most `alpha`. The cut is then
//! chosen on the feature's decile grid. Testing before searching for a cut
//! keeps features with many distinct values from being favoured.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{leaf, Node, Tree, TreeBuilder};
use super::{Hyperparams, Prediction, Samples};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CondTreeParams {
    pub tree: Tree,
    /// Adjusted p-value of every split, in node order.
    pub split_p_values: Vec<f64>,
}

impl CondTreeParams {
    pub fn predict(&self, x: &[f64]) -> Prediction {
        let p = self.tree.probability(x);
        Prediction { label: p > 0.5, score: p }
    }
}

/// `|mean(x | pos) - mean(x | neg)| / sd(x)` from the positive-class sum.
fn smd(pos_sum: f64, total: f64, n_pos: usize, n: usize, sd: f64) -> f64 {
    let n_neg = n - n_pos;
    let mp = pos_sum / n_pos as f64;
    let mn = (total - pos_sum) / n_neg as f64;
    (mp - mn).abs() / sd
}

struct Column {
    values: Vec<f64>,
    total: f64,
    sd: f64,
}

impl Column {
    fn new(values: Vec<f64>) -> Self {
        let n = values.len() as f64;
        let total: f64 = values.iter().sum();
        let mean = total / n;
        let var = values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        Self {
            values,
            total,
            sd: var.sqrt(),
        }
    }

    fn is_constant(&self) -> bool {
        self.sd <= 1e-12 * (1.0 + self.total.abs() / self.values.len() as f64)
    }
}

struct NodeTest {
    feature: usize,
    p_adjusted: f64,
}

/// Permutation test over all features of a node. Returns the winning feature,
/// or `None` when no adjusted p-value can reach `alpha`.
fn select_feature(cols: &[Column], labels: &[bool], hp: &Hyperparams, rng: &mut ChaCha8Rng) -> Option<NodeTest> {
    let n = labels.len();
    let d = cols.len();
    let n_pos = labels.iter().filter(|&&y| y).count();
    // sample whichever class is smaller; the statistic is symmetric
    let sample_pos = n_pos <= n - n_pos;
    let m = if sample_pos { n_pos } else { n - n_pos };
    let b = hp.tree_permutations;
    // a feature whose exceedance count passes this bound can no longer reach alpha
    let max_count = ((hp.tree_alpha * (b + 1) as f64) / d as f64 - 1.0).floor();
    if max_count < 0.0 {
        return None;
    }
    let max_count = max_count as usize;

    let observed: Vec<Option<f64>> = cols
        .iter()
        .map(|c| {
            if c.is_constant() {
                return None;
            }
            let pos_sum: f64 = c.values.iter().zip(labels).filter(|(_, &y)| y).map(|(x, _)| x).sum();
            Some(smd(pos_sum, c.total, n_pos, n, c.sd))
        })
        .collect();
    let mut live: Vec<usize> = (0..d).filter(|&j| observed[j].is_some()).collect();
    let mut counts = vec![0usize; d];
    let mut perm: Vec<usize> = (0..n).collect();
    for _ in 0..b {
        if live.is_empty() {
            return None;
        }
        for i in 0..m {
            let k = rng.random_range(i..n);
            perm.swap(i, k);
        }
        let chosen = &perm[..m];
        live.retain(|&j| {
            let c = &cols[j];
            let s: f64 = chosen.iter().map(|&i| c.values[i]).sum();
            let pos_sum = if sample_pos { s } else { c.total - s };
            let t = smd(pos_sum, c.total, n_pos, n, c.sd);
            let obs = observed[j].expect("live features are non-constant");
            if t >= obs * (1.0 - 1e-12) {
                counts[j] += 1;
            }
            counts[j] <= max_count
        });
    }
    live.into_iter()
        .map(|j| {
            let p = (1 + counts[j]) as f64 / (b + 1) as f64;
            NodeTest {
                feature: j,
                p_adjusted: (p * d as f64).min(1.0),
            }
        })
        .min_by(|a, b| {
            a.p_adjusted
                .total_cmp(&b.p_adjusted)
                .then_with(|| observed[b.feature].unwrap().total_cmp(&observed[a.feature].unwrap()))
                .then_with(|| a.feature.cmp(&b.feature))
        })
        .filter(|t| t.p_adjusted <= hp.tree_alpha)
}

/// Decile cutpoints. At rank `i = floor(q * n / 10)`, `q = 1..9`, the cut is
/// the midpoint between `sorted[i - 1]` and the next larger value, so ranks
/// that fall inside a run of ties cut at the run's upper edge.
fn decile_cuts(values: &[f64]) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut cuts: Vec<f64> = (1..10)
        .map(|q| q * n / 10)
        .filter(|&i| i > 0 && i < n)
        .filter_map(|i| {
            let lo = sorted[i - 1];
            sorted[i..].iter().find(|&&v| v > lo).map(|&hi| 0.5 * (lo + hi))
        })
        .collect();
    cuts.dedup();
    cuts
}

/// Best cut on the decile grid by the same standardized-mean-difference
/// statistic applied to the split indicator.
fn best_cut(values: &[f64], labels: &[bool], min_leaf: usize) -> Option<f64> {
    let n = values.len();
    let n_pos = labels.iter().filter(|&&y| y).count();
    let mut best: Option<(f64, f64)> = None;
    for cut in decile_cuts(values) {
        let n_left = values.iter().filter(|&&x| x <= cut).count();
        if n_left < min_leaf || n - n_left < min_leaf {
            continue;
        }
        let pos_left = values.iter().zip(labels).filter(|(&x, &y)| y && x <= cut).count();
        let frac = n_left as f64 / n as f64;
        let sd = (frac * (1.0 - frac)).sqrt();
        let stat = smd(pos_left as f64, n_left as f64, n_pos, n, sd);
        if best.is_none_or(|(s, _)| stat > s) {
            best = Some((stat, cut));
        }
    }
    best.map(|(_, cut)| cut)
}

pub(super) fn fit(data: &Samples, hp: &Hyperparams) -> CondTreeParams {
    let columns = data.columns();
    let mut builder = TreeBuilder::new();
    let mut p_values = Vec::new();
    let mut node_counter = 0u64;
    let root = builder.reserve();
    let mut stack = vec![(root, (0..data.len()).collect::<Vec<usize>>())];
    while let Some((slot, rows)) = stack.pop() {
        let n = rows.len();
        let n_pos = rows.iter().filter(|&&i| data.labels[i]).count();
        if n_pos == 0 || n_pos == n || n < 2 * hp.tree_min_leaf {
            builder.set(slot, leaf(&rows, &data.labels));
            continue;
        }
        let labels: Vec<bool> = rows.iter().map(|&i| data.labels[i]).collect();
        let cols: Vec<Column> = columns
            .iter()
            .map(|c| Column::new(rows.iter().map(|&i| c[i]).collect()))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
        rng.set_stream(node_counter);
        node_counter += 1;
        let split = select_feature(&cols, &labels, hp, &mut rng).and_then(|test| {
            best_cut(&cols[test.feature].values, &labels, hp.tree_min_leaf).map(|cut| (test, cut))
        });
        let Some((test, cut)) = split else {
            builder.set(slot, leaf(&rows, &data.labels));
            continue;
        };
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
            rows.iter().partition(|&&i| columns[test.feature][i] <= cut);
        let left = builder.reserve();
        let right = builder.reserve();
        builder.set(
            slot,
            Node::Split {
                feature: test.feature,
                threshold: cut,
                left,
                right,
            },
        );
        p_values.push(test.p_adjusted);
        // right first so the left subtree is grown first
        stack.push((right, right_rows));
        stack.push((left, left_rows));
    }
    CondTreeParams {
        tree: builder.finish(),
        split_p_values: p_values,
    }
}

#[cfg(test)]
mod tests {
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::super::{train_cond_tree, Hyperparams, LearnError, Parameters, Samples};
    use super::*;

    fn tree_of(m: &super::super::TrainedModel) -> &CondTreeParams {
        match &m.parameters {
            Parameters::CondTree(p) => p,
            _ => unreachable!(),
        }
    }

    #[test]
    fn decile_grid() {
        let v: Vec<f64> = (0..20).map(|i| i as f64).collect();
        assert_eq!(decile_cuts(&v), (1..10).map(|q| 2.0 * q as f64 - 0.5).collect::<Vec<_>>());
        assert!(decile_cuts(&[3.0; 10]).is_empty());
        // mostly ties: every rank falls in the run of ones
        let mut v = vec![1.0; 95];
        v.extend([2.0, 2.0, 3.0, 5.0, 5.0]);
        assert_eq!(decile_cuts(&v), vec![1.5]);
    }

    #[test]
    fn separable_single_split() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let rows: Vec<Vec<f64>> = (0..200)
            .map(|i| {
                let mag: f64 = rng.random_range(0.01..1.0);
                vec![if i < 100 { -mag } else { mag }]
            })
            .collect();
        let labels: Vec<bool> = rows.iter().map(|r| r[0] > 0.0).collect();
        let s = Samples::unnamed(rows.clone(), labels.clone());
        let m = train_cond_tree(&s, &Hyperparams::with_seed(1)).unwrap();
        let t = tree_of(&m);
        assert_eq!(t.tree.split_features(), vec![0]);
        match &t.tree.nodes[0] {
            Node::Split { threshold, .. } => assert!(threshold.abs() < 0.05, "{threshold}"),
            _ => panic!("expected a split"),
        }
        let correct = rows
            .iter()
            .zip(&labels)
            .filter(|(r, &y)| m.predict(r).unwrap().label == y)
            .count();
        assert!(correct as f64 / 200.0 >= 0.99);
    }

    #[test]
    fn noise_rarely_splits() {
        let mut leaves = 0;
        for seed in 0..50u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let rows: Vec<Vec<f64>> = (0..200).map(|_| (0..5).map(|_| rng.random::<f64>()).collect()).collect();
            let labels: Vec<bool> = (0..200).map(|_| rng.random::<bool>()).collect();
            let m = train_cond_tree(&Samples::unnamed(rows, labels), &Hyperparams::with_seed(seed)).unwrap();
            if tree_of(&m).tree.nodes.len() == 1 {
                leaves += 1;
            }
        }
        assert!(leaves >= 40, "single leaf in {leaves}/50 runs");
    }

    #[test]
    fn preconditions() {
        let s = Samples::unnamed(vec![vec![0.0]; 10], (0..10).map(|i| i % 2 == 0).collect());
        assert_eq!(
            train_cond_tree(&s, &Hyperparams::default()),
            Err(LearnError::TooFewExamples { needed: 14, got: 10 })
        );
        let s = Samples::unnamed(vec![vec![0.0]; 20], vec![false; 20]);
        assert_eq!(train_cond_tree(&s, &Hyperparams::default()), Err(LearnError::SingleClass));
    }

    #[test]
    fn deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rows: Vec<Vec<f64>> = (0..300).map(|_| vec![rng.random::<f64>(), rng.random::<f64>()]).collect();
        let labels: Vec<bool> = rows.iter().map(|r| r[0] + 0.3 * r[1] > 0.6).collect();
        let s = Samples::unnamed(rows, labels);
        let a = train_cond_tree(&s, &Hyperparams::with_seed(9)).unwrap();
        let b = train_cond_tree(&s, &Hyperparams::with_seed(9)).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        assert!(tree_of(&a).tree.leaf_count() > 2);
    }
}
