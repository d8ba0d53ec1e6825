use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::eval::{evaluate, EvalReport, FoldReport};
use super::AnalysisError;
use crate::learners::{train, Hyperparams, ModelKind, Samples};

/// One train/test partition; both index lists are sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Shuffles each class under `seed` and deals it round-robin into `k` folds.
/// The negative deal starts where the positive one stopped, so fold sizes
/// differ by at most one overall as well as per class.
pub fn stratified_kfold(labels: &[bool], k: usize, seed: u64) -> Result<Vec<Fold>, AnalysisError> {
    if k < 2 {
        return Err(AnalysisError::InvalidK(k));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0usize; labels.len()];
    let mut next = 0usize;
    for class in [true, false] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if idx.len() < k {
            return Err(AnalysisError::TooFewExamples {
                class,
                have: idx.len(),
                k,
            });
        }
        idx.shuffle(&mut rng);
        for i in idx {
            assignment[i] = next % k;
            next += 1;
        }
    }
    Ok((0..k)
        .map(|f| {
            let (test, train) = (0..labels.len()).partition(|&i| assignment[i] == f);
            Fold { train, test }
        })
        .collect())
}

/// Trains and evaluates one model per fold; metrics are micro-averaged over
/// the pooled confusion counts. Model seeds are taken from `hp`.
pub fn cross_validate(
    kind: ModelKind,
    data: &Samples,
    hp: &Hyperparams,
    k: usize,
    seed: u64,
) -> Result<EvalReport, AnalysisError> {
    let folds = stratified_kfold(&data.labels, k, seed)?;
    let reports: Vec<FoldReport> = folds
        .par_iter()
        .enumerate()
        .map(|(i, fold)| {
            let model = train(kind, &data.subset(&fold.train), hp)?;
            let r = evaluate(&model, &data.subset(&fold.test))?;
            Ok(FoldReport {
                fold: i,
                accuracy: r.accuracy,
                confusion: r.confusion,
            })
        })
        .collect::<Result<_, AnalysisError>>()?;
    Ok(EvalReport::pooled(reports))
}
