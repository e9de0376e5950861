//! Principal component projection for drift plots. The covariance
//! eigendecomposition uses cyclic Jacobi rotations, which is plenty for
//! embedding dimensions in the hundreds.

use crate::error::{Error, Result};
use crate::linalg::dot;

#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// Top-k unit principal directions, by decreasing variance.
    pub components: Vec<Vec<f64>>,
    /// Every covariance eigenvalue (divisor `n`), descending.
    pub eigenvalues: Vec<f64>,
}

/// Eigen-decomposition of a symmetric matrix (row-major, n×n).
/// Returns eigenvalues and the matching eigenvectors as rows.
fn jacobi_eigen(mut a: Vec<f64>, n: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j] * a[i * n + j])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j * n + j].total_cmp(&a[i * n + i]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| a[i * n + i]).collect();
    let vectors = order.iter().map(|&i| (0..n).map(|k| v[k * n + i]).collect()).collect();
    (values, vectors)
}

impl Pca {
    pub fn fit(vectors: &[Vec<f64>], k: usize) -> Result<Self> {
        if vectors.len() < 2 {
            return Err(Error::Parameter("PCA needs at least 2 vectors".into()));
        }
        let dim = vectors[0].len();
        if vectors.iter().any(|v| v.len() != dim) {
            return Err(Error::Validation("vectors have differing lengths".into()));
        }
        if k == 0 || k > dim {
            return Err(Error::Parameter(format!("k={k} must be in 1..={dim}")));
        }
        let n = vectors.len() as f64;
        let mut mean = vec![0.0; dim];
        for v in vectors {
            for (m, x) in mean.iter_mut().zip(v) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut cov = vec![0.0; dim * dim];
        for v in vectors {
            let c: Vec<f64> = v.iter().zip(&mean).map(|(x, m)| x - m).collect();
            for i in 0..dim {
                for j in i..dim {
                    cov[i * dim + j] += c[i] * c[j];
                }
            }
        }
        for i in 0..dim {
            for j in i..dim {
                let x = cov[i * dim + j] / n;
                cov[i * dim + j] = x;
                cov[j * dim + i] = x;
            }
        }
        let (eigenvalues, mut vecs) = jacobi_eigen(cov, dim);
        vecs.truncate(k);
        // sign convention: largest-magnitude entry positive
        for v in &mut vecs {
            let big = v.iter().cloned().fold(0.0f64, |a, x| if x.abs() > a.abs() { x } else { a });
            if big < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
        }
        Ok(Self { mean, components: vecs, eigenvalues })
    }

    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        let c: Vec<f64> = v.iter().zip(&self.mean).map(|(x, m)| x - m).collect();
        self.components.iter().map(|u| dot(u, &c)).collect()
    }

    pub fn reconstruct(&self, coords: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (u, &a) in self.components.iter().zip(coords) {
            for (o, x) in out.iter_mut().zip(u) {
                *o += a * x;
            }
        }
        out
    }
}

/// Centers the data and projects it onto its top `k` principal directions.
pub fn pca_project(vectors: &[Vec<f64>], k: usize) -> Result<Vec<Vec<f64>>> {
    let pca = Pca::fit(vectors, k)?;
    Ok(vectors.iter().map(|v| pca.project(v)).collect())
}
