//! Principal component reduction of encoder embeddings.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::survival::DLS_FEATURES;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// Orthonormal rows, one per component.
    pub components: Vec<Vec<f64>>,
    /// Sample variance along each component, non-increasing.
    pub explained_variance: Vec<f64>,
}

/// Top five components.
pub fn fit_pca(embeddings: &[Vec<f64>]) -> Result<PcaModel> {
    fit_pca_k(embeddings, DLS_FEATURES)
}

/// Eigendecomposition of the sample covariance (denominator `n - 1`).
/// Each component's largest-magnitude coordinate is made positive; ties
/// in magnitude resolve to the lowest index.
pub fn fit_pca_k(embeddings: &[Vec<f64>], k: usize) -> Result<PcaModel> {
    let n = embeddings.len();
    if n < DLS_FEATURES.max(2) {
        return Err(Error::invalid(format!("PCA needs at least {DLS_FEATURES} rows, got {n}")));
    }
    let d = embeddings[0].len();
    if k == 0 || k > d {
        return Err(Error::invalid(format!("cannot extract {k} components from {d} dimensions")));
    }
    if embeddings.iter().any(|e| e.len() != d || e.iter().any(|v| !v.is_finite())) {
        return Err(Error::invalid("embeddings must be finite and of equal length"));
    }
    let mut mean = vec![0.0; d];
    for e in embeddings {
        for (m, v) in mean.iter_mut().zip(e) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for e in embeddings {
        for a in 0..d {
            let da = e[a] - mean[a];
            for b in 0..=a {
                cov[(a, b)] += da * (e[b] - mean[b]);
            }
        }
    }
    for a in 0..d {
        for b in 0..=a {
            let v = cov[(a, b)] / (n - 1) as f64;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut components = Vec::with_capacity(k);
    let mut explained_variance = Vec::with_capacity(k);
    for &j in order.iter().take(k) {
        let mut v: Vec<f64> = eig.eigenvectors.column(j).iter().copied().collect();
        let lead = (0..d).fold(0, |best, i| if v[i].abs() > v[best].abs() { i } else { best });
        if v[lead] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        components.push(v);
        explained_variance.push(eig.eigenvalues[j].max(0.0));
    }
    Ok(PcaModel {
        mean,
        components,
        explained_variance,
    })
}

impl PcaModel {
    pub fn project(&self, embedding: &[f64]) -> Result<Vec<f64>> {
        if embedding.len() != self.mean.len() {
            return Err(Error::invalid(format!(
                "embedding has {} dimensions, PCA expects {}",
                embedding.len(),
                self.mean.len()
            )));
        }
        Ok(self
            .components
            .iter()
            .map(|c| c.iter().zip(embedding).zip(&self.mean).map(|((w, x), m)| w * (x - m)).sum())
            .collect())
    }

    pub fn reconstruct(&self, scores: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (c, s) in self.components.iter().zip(scores) {
            for (o, w) in out.iter_mut().zip(c) {
                *o += s * w;
            }
        }
        out
    }

    /// Five-feature projection as a fixed array.
    pub fn project5(&self, embedding: &[f64]) -> Result<[f64; DLS_FEATURES]> {
        let v = self.project(embedding)?;
        v.try_into()
            .map_err(|_| Error::invalid(format!("PCA model does not have {DLS_FEATURES} components")))
    }

    /// CSV rows: `mean`, one `pcK` row per component, `variance`.
    pub fn to_csv(&self) -> String {
        let row = |label: String, xs: &[f64]| {
            let mut s = label;
            for x in xs {
                s.push(',');
                s += &x.to_string();
            }
            s.push('\n');
            s
        };
        let mut out = row("mean".into(), &self.mean);
        for (k, c) in self.components.iter().enumerate() {
            out += &row(format!("pc{}", k + 1), c);
        }
        out += &row("variance".into(), &self.explained_variance);
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut mean = None;
        let mut components = Vec::new();
        let mut variance = None;
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let mut parts = line.split(',');
            let label = parts.next().unwrap_or_default().trim();
            let values: Vec<f64> = parts
                .map(|v| {
                    v.trim().parse::<f64>().map_err(|_| Error::Parse {
                        row: i + 1,
                        column: label.to_string(),
                        message: format!("bad number {v:?}"),
                    })
                })
                .collect::<Result<_>>()?;
            match label {
                "mean" => mean = Some(values),
                "variance" => variance = Some(values),
                l if l.starts_with("pc") => components.push(values),
                other => return Err(Error::invalid(format!("unknown PCA row {other}"))),
            }
        }
        let pca = PcaModel {
            mean: mean.ok_or_else(|| Error::invalid("PCA file lacks a mean row"))?,
            components,
            explained_variance: variance.ok_or_else(|| Error::invalid("PCA file lacks a variance row"))?,
        };
        if pca.components.iter().any(|c| c.len() != pca.mean.len())
            || pca.explained_variance.len() != pca.components.len()
        {
            return Err(Error::invalid("PCA file rows have inconsistent lengths"));
        }
        Ok(pca)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn axis_aligned_variances() {
        // Coordinates take +-sqrt(var * (n-1)/n) in a balanced design so the
        // sample variances are exact.
        let vars = [4.0, 3.0, 2.0, 1.0, 0.5, 0.25];
        let n = 64usize;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                vars.iter()
                    .enumerate()
                    .map(|(j, v)| {
                        let sign = if (i >> j) & 1 == 0 { 1.0 } else { -1.0 };
                        sign * (v * (n - 1) as f64 / n as f64).sqrt()
                    })
                    .collect()
            })
            .collect();
        let pca = fit_pca(&rows).unwrap();
        for (k, c) in pca.components.iter().enumerate() {
            for (j, &x) in c.iter().enumerate() {
                let want = if j == k { 1.0 } else { 0.0 };
                assert!((x - want).abs() < 1e-10, "component {k}: {c:?}");
            }
            assert!((pca.explained_variance[k] - vars[k]).abs() < 1e-10);
        }
    }

    #[test]
    fn two_dimensional_cloud_matches_closed_form() {
        let mut rng = crate::rng::keyed(&[5]);
        let rows: Vec<Vec<f64>> = (0..200)
            .map(|_| {
                let a: f64 = rng.random::<f64>() - 0.5;
                let b: f64 = rng.random::<f64>() - 0.5;
                vec![2.0 * a + b, a - 0.3 * b]
            })
            .collect();
        let pca = fit_pca_k(&rows, 2).unwrap();
        let n = rows.len() as f64;
        let m = [rows.iter().map(|r| r[0]).sum::<f64>() / n, rows.iter().map(|r| r[1]).sum::<f64>() / n];
        let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
        for r in &rows {
            sxx += (r[0] - m[0]).powi(2);
            syy += (r[1] - m[1]).powi(2);
            sxy += (r[0] - m[0]) * (r[1] - m[1]);
        }
        let (a, d, b) = (sxx / (n - 1.0), syy / (n - 1.0), sxy / (n - 1.0));
        let tr = a + d;
        let disc = ((a - d).powi(2) / 4.0 + b * b).sqrt();
        let l1 = tr / 2.0 + disc;
        let l2 = tr / 2.0 - disc;
        assert!((pca.explained_variance[0] - l1).abs() < 1e-8);
        assert!((pca.explained_variance[1] - l2).abs() < 1e-8);
        let mut v = [b, l1 - a];
        let norm = (v[0] * v[0] + v[1] * v[1]).sqrt();
        v = [v[0] / norm, v[1] / norm];
        if v[0].abs() < v[1].abs() && v[1] < 0.0 || v[0].abs() >= v[1].abs() && v[0] < 0.0 {
            v = [-v[0], -v[1]];
        }
        assert!((pca.components[0][0] - v[0]).abs() < 1e-8);
        assert!((pca.components[0][1] - v[1]).abs() < 1e-8);
    }

    #[test]
    fn projecting_the_mean_gives_zero() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| (0..6).map(|j| ((i * 7 + j * 3) % 5) as f64).collect()).collect();
        let pca = fit_pca(&rows).unwrap();
        assert!(pca.project(&pca.mean).unwrap().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn too_few_rows() {
        let rows = vec![vec![1.0; 6]; 4];
        assert!(fit_pca(&rows).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let rows: Vec<Vec<f64>> = (0..12).map(|i| (0..6).map(|j| ((i * 5 + j * j) % 7) as f64 * 0.3).collect()).collect();
        let pca = fit_pca(&rows).unwrap();
        assert_eq!(PcaModel::from_csv(&pca.to_csv()).unwrap(), pca);
    }
}
