//! Principal component analysis through a cyclic Jacobi eigensolver on the
//! sample covariance.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::invalid;
use crate::math::{abs, dot, sqrt};
use crate::{Error, Result};

const JACOBI_MAX_SWEEPS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaBasis {
    /// `c` orthonormal rows of length `m`, by descending variance.
    pub components: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub explained_variance: Vec<f64>,
}

impl PcaBasis {
    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn project_row(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.mean.len() {
            return Err(Error::DimensionMismatch {
                expected: self.mean.len(),
                found: x.len(),
            });
        }
        let centered: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        Ok(self.components.iter().map(|c| dot(c, &centered)).collect())
    }

    /// Centered rows times the transposed components: an `n × c` matrix.
    pub fn project(&self, ds: &Dataset) -> Result<Vec<Vec<f64>>> {
        ds.rows().map(|r| self.project_row(r)).collect()
    }
}

pub fn fit_pca(ds: &Dataset, n_components: usize) -> Result<PcaBasis> {
    let rows: Vec<&[f64]> = ds.rows().collect();
    fit_pca_rows(&rows, n_components)
}

/// PCA over arbitrary equal-length rows.
pub fn fit_pca_rows(rows: &[&[f64]], n_components: usize) -> Result<PcaBasis> {
    let n = rows.len();
    if n < 2 {
        return Err(invalid("PCA needs at least two rows"));
    }
    let m = rows[0].len();
    if rows.iter().any(|r| r.len() != m) {
        return Err(invalid("PCA rows differ in length"));
    }
    if n_components == 0 || n_components > m {
        return Err(invalid("component count must be in 1..=m"));
    }
    let mut mean = vec![0.0; m];
    for r in rows {
        for (acc, v) in mean.iter_mut().zip(r.iter()) {
            *acc += v;
        }
    }
    for v in &mut mean {
        *v /= n as f64;
    }
    let mut cov = vec![0.0; m * m];
    for r in rows {
        for i in 0..m {
            let di = r[i] - mean[i];
            for j in i..m {
                cov[i * m + j] += di * (r[j] - mean[j]);
            }
        }
    }
    for i in 0..m {
        for j in i..m {
            let v = cov[i * m + j] / (n - 1) as f64;
            cov[i * m + j] = v;
            cov[j * m + i] = v;
        }
    }
    let (values, vectors) = symmetric_eigen(cov, m);
    let mut order: Vec<usize> = (0..m).collect();
    // Stable sort: equal eigenvalues keep index order.
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let components = order[..n_components]
        .iter()
        .map(|&k| (0..m).map(|i| vectors[i * m + k]).collect())
        .collect();
    let explained_variance = order[..n_components]
        .iter()
        .map(|&k| values[k].max(0.0))
        .collect();
    Ok(PcaBasis {
        components,
        mean,
        explained_variance,
    })
}

/// Eigen-decomposition of a symmetric row-major `m × m` matrix. Returns the
/// eigenvalues and a row-major matrix whose columns are the eigenvectors.
fn symmetric_eigen(mut a: Vec<f64>, m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut v = vec![0.0; m * m];
    for i in 0..m {
        v[i * m + i] = 1.0;
    }
    let scale: f64 = a.iter().map(|x| x * x).sum::<f64>();
    for _ in 0..JACOBI_MAX_SWEEPS {
        let off: f64 = (0..m)
            .flat_map(|i| (0..m).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * m + j] * a[i * m + j])
            .sum();
        if off <= 1e-30 * scale || off == 0.0 {
            break;
        }
        for p in 0..m {
            for q in (p + 1)..m {
                let apq = a[p * m + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * m + p];
                let aqq = a[q * m + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (abs(theta) + sqrt(theta * theta + 1.0));
                let c = 1.0 / sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..m {
                    let akp = a[k * m + p];
                    let akq = a[k * m + q];
                    a[k * m + p] = c * akp - s * akq;
                    a[k * m + q] = s * akp + c * akq;
                }
                for k in 0..m {
                    let apk = a[p * m + k];
                    let aqk = a[q * m + k];
                    a[p * m + k] = c * apk - s * aqk;
                    a[q * m + k] = s * apk + c * aqk;
                }
                for k in 0..m {
                    let vkp = v[k * m + p];
                    let vkq = v[k * m + q];
                    v[k * m + p] = c * vkp - s * vkq;
                    v[k * m + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..m).map(|i| a[i * m + i]).collect(), v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, SymmetricEigen};
    use rand::Rng;

    #[test]
    fn axis_aligned_variance() {
        let ds = Dataset::from_rows(
            vec![vec![0.0, 0.5], vec![0.4, 0.5], vec![0.8, 0.5], vec![1.0, 0.5]],
            vec![0, 1, 0, 1],
            2,
        )
        .unwrap();
        let basis = fit_pca(&ds, 2).unwrap();
        let first = &basis.components[0];
        assert!((abs(first[0]) - 1.0).abs() < 1e-12 && abs(first[1]) < 1e-12);
        assert!(basis.explained_variance[0] >= basis.explained_variance[1]);
        assert_eq!(basis.explained_variance[1], 0.0);
    }

    #[test]
    fn rejects_bad_component_counts() {
        let ds = Dataset::from_rows(vec![vec![0.0, 1.0], vec![1.0, 0.0]], vec![0, 1], 2).unwrap();
        assert!(fit_pca(&ds, 3).is_err());
        assert!(fit_pca(&ds, 0).is_err());
        let single = Dataset::from_rows(vec![vec![0.0, 1.0]], vec![0], 2).unwrap();
        assert!(fit_pca(&single, 1).is_err());
    }

    fn random_rows(rng: &mut crate::rng::SeededRng, n: usize, m: usize) -> Vec<Vec<f64>> {
        (0..n).map(|_| (0..m).map(|_| rng.random::<f64>()).collect()).collect()
    }

    /// Independent route: nalgebra's symmetric eigensolver on the same
    /// covariance, computed here from scratch.
    fn oracle(rows: &[Vec<f64>]) -> (Vec<f64>, DMatrix<f64>) {
        let n = rows.len();
        let m = rows[0].len();
        let x = DMatrix::from_fn(n, m, |i, j| rows[i][j]);
        let mean = x.row_mean();
        let centered = DMatrix::from_fn(n, m, |i, j| x[(i, j)] - mean[j]);
        let cov = centered.transpose() * &centered / (n as f64 - 1.0);
        let eig = SymmetricEigen::new(cov);
        let mut idx: Vec<usize> = (0..m).collect();
        idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let values = idx.iter().map(|&k| eig.eigenvalues[k]).collect();
        let vecs = DMatrix::from_fn(m, m, |i, k| eig.eigenvectors[(i, idx[k])]);
        (values, vecs)
    }

    #[test]
    fn matches_dense_eigensolver_up_to_sign() {
        let mut rng = crate::rng::seeded(17);
        for _ in 0..50 {
            let rows = random_rows(&mut rng, 5, 4);
            let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
            let basis = fit_pca_rows(&refs, 4).unwrap();
            let (values, vecs) = oracle(&rows);
            for (got, want) in basis.explained_variance.iter().zip(&values).take(4) {
                assert!((got - want.max(0.0)).abs() < 1e-6);
            }
            // 5 points in 4-D span at most 4 directions; the smallest
            // eigenvalue may be degenerate, so compare the leading three.
            for k in 0..3 {
                let ours = &basis.components[k];
                let d: f64 = (0..4).map(|i| ours[i] * vecs[(i, k)]).sum();
                assert!((abs(d) - 1.0).abs() < 1e-6, "component {k}: |dot| = {d}");
            }
        }
    }

    #[test]
    fn components_are_orthonormal_and_sorted() {
        let mut rng = crate::rng::seeded(3);
        let rows = random_rows(&mut rng, 40, 6);
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let basis = fit_pca_rows(&refs, 6).unwrap();
        for a in 0..6 {
            for b in 0..6 {
                let d = dot(&basis.components[a], &basis.components[b]);
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((d - want).abs() < 1e-6);
            }
        }
        assert!(basis.explained_variance.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn full_rank_reconstruction() {
        let mut rng = crate::rng::seeded(5);
        let rows = random_rows(&mut rng, 30, 5);
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let basis = fit_pca_rows(&refs, 5).unwrap();
        let mut err = 0.0;
        let mut total = 0.0;
        for r in &rows {
            let z = basis.project_row(r).unwrap();
            for (i, (x, mean)) in r.iter().zip(&basis.mean).enumerate() {
                let rec: f64 = (0..5).map(|k| z[k] * basis.components[k][i]).sum();
                let centered = x - mean;
                err += (rec - centered) * (rec - centered);
                total += centered * centered;
            }
        }
        assert!(sqrt(err / total) < 1e-6);
    }
}
