//! Random forest of unpruned CART trees with Gini splits.
//!
//! Tree `t` draws its bootstrap and per-split feature subsets from a stream
//! seeded with `seed + t`, so trees can be grown in parallel and the forest
//! stays reproducible.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{leaf, Node, Tree, TreeBuilder};
use super::{Hyperparams, Prediction, Samples};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub trees: Vec<Tree>,
    /// Mean impurity decrease per feature, averaged over trees.
    pub importances: Vec<f64>,
    /// Out-of-bag accuracy over rows left out by at least one tree.
    pub oob_accuracy: Option<f64>,
}

impl ForestParams {
    pub fn votes(&self, x: &[f64]) -> usize {
        self.trees.iter().filter(|t| t.probability(x) > 0.5).count()
    }

    pub fn predict(&self, x: &[f64]) -> Prediction {
        let score = self.votes(x) as f64 / self.trees.len() as f64;
        Prediction {
            label: score > 0.5,
            score,
        }
    }
}

fn gini(pos: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let p = pos as f64 / n as f64;
    2.0 * p * (1.0 - p)
}

struct GrownTree {
    tree: Tree,
    importances: Vec<f64>,
    in_bag: Vec<bool>,
}

fn grow_tree(columns: &[Vec<f64>], labels: &[bool], mtry: usize, rng: &mut ChaCha8Rng) -> GrownTree {
    let n = labels.len();
    let d = columns.len();
    let bootstrap: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
    let mut in_bag = vec![false; n];
    for &i in &bootstrap {
        in_bag[i] = true;
    }
    let mut importances = vec![0.0; d];
    let mut builder = TreeBuilder::new();
    let root = builder.reserve();
    let mut stack = vec![(root, bootstrap)];
    while let Some((slot, rows)) = stack.pop() {
        let size = rows.len();
        let pos = rows.iter().filter(|&&i| labels[i]).count();
        if pos == 0 || pos == size || size < 2 {
            builder.set(slot, leaf(&rows, labels));
            continue;
        }
        let parent_impurity = gini(pos, size);
        // (gain, feature, threshold)
        let mut best: Option<(f64, usize, f64)> = None;
        let mut order: Vec<usize> = Vec::with_capacity(size);
        for feature in index::sample(rng, d, mtry) {
            let col = &columns[feature];
            order.clear();
            order.extend_from_slice(&rows);
            order.sort_by(|&a, &b| col[a].total_cmp(&col[b]));
            let mut left_pos = 0;
            for k in 1..size {
                left_pos += labels[order[k - 1]] as usize;
                let (lo, hi) = (col[order[k - 1]], col[order[k]]);
                if lo >= hi {
                    continue;
                }
                let right_pos = pos - left_pos;
                let weighted = (k as f64 * gini(left_pos, k) + (size - k) as f64 * gini(right_pos, size - k)) / size as f64;
                let gain = parent_impurity - weighted;
                if best.is_none_or(|(g, _, _)| gain > g) {
                    best = Some((gain, feature, 0.5 * (lo + hi)));
                }
            }
        }
        let Some((gain, feature, threshold)) = best.filter(|(g, _, _)| *g > 1e-12) else {
            builder.set(slot, leaf(&rows, labels));
            continue;
        };
        importances[feature] += gain * size as f64 / n as f64;
        let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| columns[feature][i] <= threshold);
        let left = builder.reserve();
        let right = builder.reserve();
        builder.set(
            slot,
            Node::Split {
                feature,
                threshold,
                left,
                right,
            },
        );
        stack.push((right, r));
        stack.push((left, l));
    }
    GrownTree {
        tree: builder.finish(),
        importances,
        in_bag,
    }
}

pub(super) fn fit(data: &Samples, hp: &Hyperparams) -> ForestParams {
    let columns = data.columns();
    let d = data.n_features();
    let mtry = hp.mtry(d);
    let grown: Vec<GrownTree> = (0..hp.forest_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(hp.seed.wrapping_add(t as u64));
            grow_tree(&columns, &data.labels, mtry, &mut rng)
        })
        .collect();

    let mut importances = vec![0.0; d];
    for g in &grown {
        for (acc, v) in importances.iter_mut().zip(&g.importances) {
            *acc += v;
        }
    }
    importances.iter_mut().for_each(|v| *v /= grown.len() as f64);

    let mut oob_correct = 0usize;
    let mut oob_seen = 0usize;
    for (i, (row, &y)) in data.rows.iter().zip(&data.labels).enumerate() {
        let (votes, voters) = grown
            .iter()
            .filter(|g| !g.in_bag[i])
            .fold((0usize, 0usize), |(v, n), g| (v + (g.tree.probability(row) > 0.5) as usize, n + 1));
        if voters > 0 {
            oob_seen += 1;
            oob_correct += ((2 * votes > voters) == y) as usize;
        }
    }
    ForestParams {
        trees: grown.into_iter().map(|g| g.tree).collect(),
        importances,
        oob_accuracy: (oob_seen > 0).then(|| oob_correct as f64 / oob_seen as f64),
    }
}

#[cfg(test)]
mod tests {
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::super::{train_random_forest, Hyperparams, Parameters, Samples};
    use super::ForestParams;

    fn params(m: &super::super::TrainedModel) -> &ForestParams {
        match &m.parameters {
            Parameters::RandomForest(p) => p,
            _ => unreachable!(),
        }
    }

    fn separable(n: usize, seed: u64) -> Samples {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        while rows.len() < n {
            let x: f64 = rng.random_range(-5.0..5.0);
            let y: f64 = rng.random_range(-5.0..5.0);
            let side = x - 0.5 * y;
            if side.abs() < 0.5 {
                continue;
            }
            rows.push(vec![x, y]);
            labels.push(side > 0.0);
        }
        Samples::unnamed(rows, labels)
    }

    #[test]
    fn oob_accuracy_on_separable_data() {
        let m = train_random_forest(&separable(600, 1), &Hyperparams::with_seed(4)).unwrap();
        let oob = params(&m).oob_accuracy.unwrap();
        assert!(oob >= 0.98, "oob {oob}");
    }

    #[test]
    fn seeded_forests_serialize_identically() {
        let s = separable(300, 2);
        let a = train_random_forest(&s, &Hyperparams::with_seed(8)).unwrap();
        let b = train_random_forest(&s, &Hyperparams::with_seed(8)).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        let c = train_random_forest(&s, &Hyperparams::with_seed(9)).unwrap();
        assert_ne!(a.to_json(), c.to_json());
    }

    #[test]
    fn single_tree_and_vote_fraction() {
        let s = separable(200, 3);
        let hp = Hyperparams {
            forest_trees: 1,
            ..Hyperparams::with_seed(1)
        };
        let m = train_random_forest(&s, &hp).unwrap();
        assert_eq!(params(&m).trees.len(), 1);
        for r in &s.rows {
            let p = m.predict(r).unwrap();
            assert!(p.score == 0.0 || p.score == 1.0);
        }

        let hp = Hyperparams {
            forest_trees: 7,
            ..Hyperparams::with_seed(1)
        };
        let m = train_random_forest(&s, &hp).unwrap();
        let f = params(&m);
        for r in s.rows.iter().take(50) {
            let p = m.predict(r).unwrap();
            assert_eq!(p.score, f.votes(r) as f64 / 7.0);
        }
        // far from the boundary every tree agrees
        assert_eq!(m.predict(&[5.0, -5.0]).unwrap().score, 1.0);
    }

    #[test]
    fn importance_concentrates_on_signal() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let rows: Vec<Vec<f64>> = (0..400).map(|_| (0..4).map(|_| rng.random::<f64>()).collect()).collect();
        let labels: Vec<bool> = rows.iter().map(|r| r[2] > 0.5).collect();
        let m = train_random_forest(&Samples::unnamed(rows, labels), &Hyperparams::with_seed(2)).unwrap();
        let imp = &params(&m).importances;
        let top = (0..4).max_by(|&a, &b| imp[a].total_cmp(&imp[b])).unwrap();
        assert_eq!(top, 2, "{imp:?}");
    }
}
