//! Principal components by power iteration with deflation.

use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::learners::Samples;

const TOLERANCE: f64 = 1e-10;
const MAX_ITERATIONS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaResult {
    pub feature_names: Vec<String>,
    /// Column means used for centering.
    pub mean: Vec<f64>,
    /// `k` unit vectors of length `d`, by decreasing eigenvalue.
    pub components: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    pub explained_variance_ratio: Vec<f64>,
    pub total_variance: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn mat_vec(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    m.iter().map(|row| dot(row, v)).collect()
}

/// Removes the projections onto `basis` (twice, for numerical safety).
fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        for b in basis {
            let p = dot(v, b);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
        }
    }
}

/// A unit vector orthogonal to `basis`, taken from the standard basis.
fn complement_vector(d: usize, basis: &[Vec<f64>]) -> Vec<f64> {
    let mut best = vec![0.0; d];
    let mut best_norm = -1.0;
    for i in 0..d {
        let mut e = vec![0.0; d];
        e[i] = 1.0;
        orthogonalize(&mut e, basis);
        let n = norm(&e);
        if n > best_norm {
            best_norm = n;
            best = e;
        }
    }
    best.iter_mut().for_each(|x| *x /= best_norm);
    best
}

fn leading_eigenvector(m: &[Vec<f64>], found: &[Vec<f64>]) -> Vec<f64> {
    let d = m.len();
    // start from the deflated matrix's largest column
    let mut v = (0..d)
        .map(|j| m.iter().map(|r| r[j]).collect::<Vec<f64>>())
        .max_by(|a, b| norm(a).total_cmp(&norm(b)))
        .unwrap_or_default();
    orthogonalize(&mut v, found);
    let n = norm(&v);
    if n <= f64::EPSILON * 1e3 {
        return complement_vector(d, found);
    }
    v.iter_mut().for_each(|x| *x /= n);
    for _ in 0..MAX_ITERATIONS {
        let mut w = mat_vec(m, &v);
        orthogonalize(&mut w, found);
        let n = norm(&w);
        if n <= f64::EPSILON * 1e3 {
            return complement_vector(d, found);
        }
        w.iter_mut().for_each(|x| *x /= n);
        let sign = dot(&w, &v).signum();
        let change = w.iter().zip(&v).map(|(a, b)| (a - sign * b).powi(2)).sum::<f64>().sqrt();
        v = w;
        if change < TOLERANCE {
            break;
        }
    }
    v
}

/// Top-`k` principal components of the sample covariance of `data`.
pub fn pca(data: &Samples, k: usize) -> Result<PcaResult, AnalysisError> {
    let d = data.n_features();
    if k > d {
        return Err(AnalysisError::TooManyComponents {
            requested: k,
            available: d,
        });
    }
    let n = data.len();
    if n < 2 {
        return Err(AnalysisError::DegenerateData);
    }
    let mut mean = vec![0.0; d];
    for r in &data.rows {
        mean.iter_mut().zip(r).for_each(|(m, x)| *m += x);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut cov = vec![vec![0.0; d]; d];
    for r in &data.rows {
        let c: Vec<f64> = r.iter().zip(&mean).map(|(x, m)| x - m).collect();
        for i in 0..d {
            for j in i..d {
                cov[i][j] += c[i] * c[j];
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            cov[i][j] /= (n - 1) as f64;
            cov[j][i] = cov[i][j];
        }
    }
    let total: f64 = (0..d).map(|i| cov[i][i]).sum();
    if total <= 0.0 {
        return Err(AnalysisError::DegenerateData);
    }

    let mut components: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut eigenvalues = Vec::with_capacity(k);
    let mut deflated = cov.clone();
    for _ in 0..k {
        let v = leading_eigenvector(&deflated, &components);
        // Rayleigh quotient on the undeflated matrix
        let lambda = dot(&v, &mat_vec(&cov, &v)).max(0.0);
        for i in 0..d {
            for j in 0..d {
                deflated[i][j] -= lambda * v[i] * v[j];
            }
        }
        components.push(v);
        eigenvalues.push(lambda);
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eigenvalues[b].total_cmp(&eigenvalues[a]));
    let components: Vec<Vec<f64>> = order.iter().map(|&i| components[i].clone()).collect();
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eigenvalues[i]).collect();
    Ok(PcaResult {
        feature_names: data.names.clone(),
        mean,
        explained_variance_ratio: eigenvalues.iter().map(|l| l / total).collect(),
        components,
        eigenvalues,
        total_variance: total,
    })
}

impl PcaResult {
    pub fn project(&self, row: &[f64]) -> Vec<f64> {
        let c: Vec<f64> = row.iter().zip(&self.mean).map(|(x, m)| x - m).collect();
        self.components.iter().map(|v| dot(v, &c)).collect()
    }

    /// Mean squared residual after projecting onto the first `k` components.
    pub fn reconstruction_error(&self, data: &Samples, k: usize) -> f64 {
        let k = k.min(self.components.len());
        let total: f64 = data
            .rows
            .iter()
            .map(|r| {
                let c: Vec<f64> = r.iter().zip(&self.mean).map(|(x, m)| x - m).collect();
                let proj: f64 = self.components[..k].iter().map(|v| dot(v, &c).powi(2)).sum();
                (dot(&c, &c) - proj).max(0.0)
            })
            .sum();
        total / data.len().max(1) as f64
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("component,eigenvalue,explained_variance_ratio");
        for name in &self.feature_names {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for (i, v) in self.components.iter().enumerate() {
            out.push_str(&format!("{},{},{}", i + 1, self.eigenvalues[i], self.explained_variance_ratio[i]));
            for x in v {
                out.push_str(&format!(",{x}"));
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use nalgebra::{DMatrix, SymmetricEigen};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    use super::*;

    fn gaussian_rows(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| (0..d).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect()
    }

    fn assert_orthonormal(p: &PcaResult) {
        for (i, a) in p.components.iter().enumerate() {
            for (j, b) in p.components.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot(a, b) - want).abs() < 1e-8, "({i},{j}) = {}", dot(a, b));
            }
        }
    }

    #[test]
    fn rank_one_line() {
        let rows: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64 * 0.3 - 4.0, 2.0 * (i as f64 * 0.3 - 4.0)]).collect();
        let p = pca(&Samples::unnamed(rows, vec![false; 50]), 2).unwrap();
        assert!((p.explained_variance_ratio[0] - 1.0).abs() < 1e-9);
        let v = &p.components[0];
        let s = v[0].signum();
        assert!((s * v[0] - 1.0 / 5f64.sqrt()).abs() < 1e-9);
        assert!((s * v[1] - 2.0 / 5f64.sqrt()).abs() < 1e-9);
        assert_orthonormal(&p);
    }

    #[test]
    fn isotropic_gaussian_splits_evenly() {
        let rows = gaussian_rows(10_000, 2, 4);
        let p = pca(&Samples::unnamed(rows, vec![false; 10_000]), 2).unwrap();
        for r in &p.explained_variance_ratio {
            assert!((r - 0.5).abs() < 0.03, "{r}");
        }
    }

    #[test]
    fn matches_dense_eigensolver() {
        let mut rows = gaussian_rows(300, 5, 7);
        // correlate the columns so the spectrum is spread out
        for r in rows.iter_mut() {
            r[1] += 2.0 * r[0];
            r[3] -= 0.5 * r[2] + r[0];
            r[4] *= 3.0;
        }
        let s = Samples::unnamed(rows.clone(), vec![false; 300]);
        let p = pca(&s, 5).unwrap();
        assert_orthonormal(&p);
        let sum: f64 = p.explained_variance_ratio.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);

        let n = rows.len();
        let x = DMatrix::from_fn(n, 5, |i, j| rows[i][j] - p.mean[j]);
        let cov = x.transpose() * &x / (n as f64 - 1.0);
        let eig = SymmetricEigen::new(cov);
        let mut oracle: Vec<(f64, Vec<f64>)> = (0..5)
            .map(|i| (eig.eigenvalues[i], eig.eigenvectors.column(i).iter().copied().collect()))
            .collect();
        oracle.sort_by(|a, b| b.0.total_cmp(&a.0));
        for (i, (lambda, vec)) in oracle.iter().enumerate() {
            assert!((p.eigenvalues[i] - lambda).abs() < 1e-8 * lambda.max(1.0), "{i}");
            assert!((dot(&p.components[i], vec).abs() - 1.0).abs() < 1e-6, "{i}");
        }
        let errs: Vec<f64> = (0..=5).map(|k| p.reconstruction_error(&s, k)).collect();
        assert!(errs.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{errs:?}");
        assert!(errs[5] < 1e-9);
    }

    #[test]
    fn degenerate_inputs() {
        let rows = vec![vec![1.0, 2.0]; 4];
        assert_eq!(pca(&Samples::unnamed(rows.clone(), vec![false; 4]), 1), Err(AnalysisError::DegenerateData));
        assert!(matches!(
            pca(&Samples::unnamed(rows, vec![false; 4]), 3),
            Err(AnalysisError::TooManyComponents { .. })
        ));
    }

    #[test]
    fn zero_variance_directions_stay_orthonormal() {
        // rank 2 in 4 dimensions
        let base = gaussian_rows(100, 2, 1);
        let rows: Vec<Vec<f64>> = base.iter().map(|r| vec![r[0], r[1], r[0] + r[1], 5.0]).collect();
        let p = pca(&Samples::unnamed(rows, vec![false; 100]), 4).unwrap();
        assert_orthonormal(&p);
        assert!(p.explained_variance_ratio[2] < 1e-9);
        let sum: f64 = p.explained_variance_ratio.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
    }
}
