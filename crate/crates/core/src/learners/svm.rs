//! Linear SVM trained by primal hinge-loss subgradient descent (Pegasos).
//!
//! Inputs are z-scored first. The bias is learned as the weight of a constant
//! extra coordinate, so it is regularized like the other weights.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{sigmoid, Hyperparams, Prediction, Samples, Standardization};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    /// Weights in standardized feature space.
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl SvmParams {
    pub fn margin(&self, z: &[f64]) -> f64 {
        self.bias + self.weights.iter().zip(z).map(|(w, x)| w * x).sum::<f64>()
    }

    /// `z` must already be standardized.
    pub fn predict(&self, z: &[f64]) -> Prediction {
        let m = self.margin(z);
        Prediction {
            label: m > 0.0,
            score: sigmoid(m),
        }
    }
}

pub(super) fn fit(data: &Samples, standardization: &Standardization, hp: &Hyperparams) -> SvmParams {
    let d = data.n_features();
    // last coordinate is the constant bias input
    let rows: Vec<Vec<f64>> = data
        .rows
        .iter()
        .map(|r| {
            let mut z = standardization.apply(r);
            z.push(1.0);
            z
        })
        .collect();
    let targets: Vec<f64> = data.labels.iter().map(|&y| if y { 1.0 } else { -1.0 }).collect();
    let lambda = hp.svm_lambda;
    let radius = 1.0 / lambda.sqrt();
    let mut w = vec![0.0; d + 1];
    let mut order: Vec<usize> = (0..rows.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let mut t = 0u64;
    for _ in 0..hp.svm_epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (lambda * t as f64);
            let x = &rows[i];
            let y = targets[i];
            let margin: f64 = w.iter().zip(x).map(|(a, b)| a * b).sum();
            let shrink = 1.0 - eta * lambda;
            w.iter_mut().for_each(|v| *v *= shrink);
            if y * margin < 1.0 {
                for (v, xi) in w.iter_mut().zip(x) {
                    *v += eta * y * xi;
                }
            }
            let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > radius {
                let scale = radius / norm;
                w.iter_mut().for_each(|v| *v *= scale);
            }
        }
    }
    let bias = w.pop().unwrap_or(0.0);
    SvmParams { weights: w, bias }
}
