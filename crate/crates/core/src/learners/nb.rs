use serde::{Deserialize, Serialize};

use super::{Prediction, Samples};

/// Gaussian naive Bayes. Index 0 is the negative class, 1 the positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaiveBayesParams {
    pub priors: [f64; 2],
    pub means: [Vec<f64>; 2],
    pub variances: [Vec<f64>; 2],
}

pub(super) fn fit(data: &Samples, var_floor: f64) -> NaiveBayesParams {
    let d = data.n_features();
    let mut counts = [0usize; 2];
    let mut means = [vec![0.0; d], vec![0.0; d]];
    for (row, &y) in data.rows.iter().zip(&data.labels) {
        let c = y as usize;
        counts[c] += 1;
        for (m, x) in means[c].iter_mut().zip(row) {
            *m += x;
        }
    }
    for c in 0..2 {
        means[c].iter_mut().for_each(|m| *m /= counts[c] as f64);
    }
    let mut variances = [vec![0.0; d], vec![0.0; d]];
    for (row, &y) in data.rows.iter().zip(&data.labels) {
        let c = y as usize;
        for ((v, x), m) in variances[c].iter_mut().zip(row).zip(&means[c]) {
            *v += (x - m) * (x - m);
        }
    }
    for c in 0..2 {
        variances[c]
            .iter_mut()
            .for_each(|v| *v = (*v / counts[c] as f64).max(var_floor));
    }
    let n = data.len() as f64;
    NaiveBayesParams {
        priors: [counts[0] as f64 / n, counts[1] as f64 / n],
        means,
        variances,
    }
}

impl NaiveBayesParams {
    fn log_joint(&self, c: usize, x: &[f64]) -> f64 {
        let ln_2pi = (2.0 * std::f64::consts::PI).ln();
        self.priors[c].ln()
            + x.iter()
                .zip(self.means[c].iter().zip(&self.variances[c]))
                .map(|(x, (m, v))| -0.5 * (ln_2pi + v.ln() + (x - m) * (x - m) / v))
                .sum::<f64>()
    }

    pub fn predict(&self, x: &[f64]) -> Prediction {
        let neg = self.log_joint(0, x);
        let pos = self.log_joint(1, x);
        Prediction {
            label: pos > neg,
            score: super::sigmoid(pos - neg),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::{train_gaussian_nb, Hyperparams, Samples};

    #[test]
    fn midpoint_goes_to_nearer_class() {
        // class 0 at {-1, 1}, class 1 at {9, 11}: unit variance, means 0 and 10
        let rows = vec![vec![-1.0], vec![1.0], vec![9.0], vec![11.0]];
        let s = Samples::unnamed(rows, vec![false, false, true, true]);
        let m = train_gaussian_nb(&s, &Hyperparams::default()).unwrap();
        let mid = m.predict(&[5.0]).unwrap();
        assert!((mid.score - 0.5).abs() < 1e-9);
        assert!(m.predict(&[4.0]).unwrap().score < 0.5);
        assert!(!m.predict(&[4.0]).unwrap().label);
        assert!(m.predict(&[6.0]).unwrap().label);
        // closed form at x = 6: log-odds = ((6-0)^2 - (6-10)^2) / 2 = 10
        let p = m.predict(&[6.0]).unwrap().score;
        assert!((p - 1.0 / (1.0 + (-10.0f64).exp())).abs() < 1e-12);
    }

    #[test]
    fn identical_distributions_follow_prior() {
        let rows = vec![vec![0.0], vec![1.0], vec![0.0], vec![1.0], vec![0.0], vec![1.0]];
        let labels = vec![true, true, true, true, false, false];
        let m = train_gaussian_nb(&Samples::unnamed(rows, labels), &Hyperparams::default()).unwrap();
        let p = m.predict(&[0.3]).unwrap();
        assert!(p.label);
        assert!((p.score - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn constant_feature_uses_floor() {
        let rows = vec![vec![2.0, 0.0], vec![2.0, 1.0], vec![2.0, 5.0], vec![2.0, 6.0]];
        let m = train_gaussian_nb(
            &Samples::unnamed(rows, vec![false, false, true, true]),
            &Hyperparams::default(),
        )
        .unwrap();
        let p = m.predict(&[2.0, 5.5]).unwrap();
        assert!(p.score.is_finite() && p.label);
        match &m.parameters {
            super::super::Parameters::GaussianNb(nb) => assert_eq!(nb.variances[0][0], 1e-9),
            _ => unreachable!(),
        }
    }
}
