//! Principal component extraction on the training split.
//!
//! Columns are centered and (by default) scaled to unit variance before the
//! covariance eigendecomposition, so "variability" is not dominated by unit
//! choices. The eigensolver is a cyclic Jacobi iteration: feature counts
//! here are small, and staying inside the scalar trait keeps the whole
//! pipeline generic.

use crate::preprocess::PreprocessError;
use crate::Real;

/// Fitted projection: per-feature centering/scaling plus the top component
/// loadings ranked by explained variance.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel<T> {
    pub means: Vec<T>,
    /// Per-feature divisor; all ones when standardization is off or a
    /// column is constant.
    pub scales: Vec<T>,
    /// Top-d loading vectors, each of length m, ranked by eigenvalue.
    pub components: Vec<Vec<T>>,
    /// Eigenvalues matching `components`.
    pub explained_variance: Vec<T>,
    /// Sum of all eigenvalues (trace of the covariance).
    pub total_variance: T,
}

impl<T: Real> PcaModel<T> {
    /// Fraction of total variance captured by component `j`.
    pub fn variance_share(&self, j: usize) -> T {
        if self.total_variance > T::zero() {
            self.explained_variance[j] / self.total_variance
        } else {
            T::zero()
        }
    }

    /// Projects one raw row onto component `j`.
    pub fn project(&self, row: &[T], j: usize) -> T {
        let mut acc = T::zero();
        for (i, &v) in row.iter().enumerate() {
            acc = acc + (v - self.means[i]) / self.scales[i] * self.components[j][i];
        }
        acc
    }

    /// Reconstructs the standardized row from `self.components.len()`
    /// projections; with d = m this recovers the centered data.
    pub fn reconstruct_standardized(&self, projections: &[T]) -> Vec<T> {
        let m = self.means.len();
        let mut out = vec![T::zero(); m];
        for (j, &p) in projections.iter().enumerate() {
            for i in 0..m {
                out[i] = out[i] + p * self.components[j][i];
            }
        }
        out
    }
}

pub fn fit_pca<T: Real>(
    rows: &[Vec<T>],
    d: usize,
    standardize: bool,
) -> Result<PcaModel<T>, PreprocessError> {
    let n = rows.len();
    if n < 2 {
        return Err(PreprocessError::NotEnoughRows { have: n });
    }
    let m = rows[0].len();
    let max_d = m.min(n - 1);
    if d == 0 || d > max_d {
        return Err(PreprocessError::BadCandidateCount { d, max: max_d });
    }

    let nf = T::of(n as f64);
    let mut means = vec![T::zero(); m];
    for row in rows {
        for (i, &v) in row.iter().enumerate() {
            means[i] = means[i] + v;
        }
    }
    for mu in &mut means {
        *mu = *mu / nf;
    }

    let denom = T::of((n - 1) as f64);
    let mut scales = vec![T::one(); m];
    if standardize {
        for i in 0..m {
            let var = rows
                .iter()
                .fold(T::zero(), |acc, r| acc + (r[i] - means[i]) * (r[i] - means[i]))
                / denom;
            let sd = var.sqrt();
            if sd > T::zero() {
                scales[i] = sd;
            }
        }
    }

    // Covariance of the standardized data.
    let mut cov = vec![vec![T::zero(); m]; m];
    for row in rows {
        for i in 0..m {
            let xi = (row[i] - means[i]) / scales[i];
            for j in i..m {
                let xj = (row[j] - means[j]) / scales[j];
                cov[i][j] = cov[i][j] + xi * xj;
            }
        }
    }
    for i in 0..m {
        for j in i..m {
            cov[i][j] = cov[i][j] / denom;
            cov[j][i] = cov[i][j];
        }
    }

    let (mut eigenvalues, mut vectors) = jacobi_eigen(cov);

    // Deterministic sign convention: the largest-magnitude loading of each
    // component is positive.
    for v in &mut vectors {
        let mut big = 0;
        for (i, &x) in v.iter().enumerate() {
            if x.abs() > v[big].abs() {
                big = i;
            }
        }
        if v[big] < T::zero() {
            for x in v.iter_mut() {
                *x = -*x;
            }
        }
    }

    let total_variance = eigenvalues.iter().fold(T::zero(), |a, &b| a + b);
    eigenvalues.truncate(d);
    vectors.truncate(d);
    Ok(PcaModel {
        means,
        scales,
        components: vectors,
        explained_variance: eigenvalues,
        total_variance,
    })
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns
/// eigenvalues and matching eigenvectors sorted by descending eigenvalue.
fn jacobi_eigen<T: Real>(mut a: Vec<Vec<T>>) -> (Vec<T>, Vec<Vec<T>>) {
    let m = a.len();
    // v starts as identity; columns converge to eigenvectors.
    let mut v = vec![vec![T::zero(); m]; m];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = T::one();
    }

    let eps = T::epsilon() * T::of(16.0);
    for _sweep in 0..100 {
        let mut off = T::zero();
        for p in 0..m {
            for q in (p + 1)..m {
                off = off + a[p][q] * a[p][q];
            }
        }
        let scale = (0..m).fold(T::zero(), |acc, i| acc + a[i][i] * a[i][i]) + off + off;
        if off <= eps * eps * scale.max(T::one()) {
            break;
        }
        for p in 0..m {
            for q in (p + 1)..m {
                if a[p][q] == T::zero() {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (T::of(2.0) * a[p][q]);
                // tan of the rotation angle, the stable small-angle root.
                let t = {
                    let sign = if theta >= T::zero() { T::one() } else { -T::one() };
                    sign / (theta.abs() + (theta * theta + T::one()).sqrt())
                };
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;

                for i in 0..m {
                    let aip = a[i][p];
                    let aiq = a[i][q];
                    a[i][p] = c * aip - s * aiq;
                    a[i][q] = s * aip + c * aiq;
                }
                for i in 0..m {
                    let api = a[p][i];
                    let aqi = a[q][i];
                    a[p][i] = c * api - s * aqi;
                    a[q][i] = s * api + c * aqi;
                }
                for row in v.iter_mut() {
                    let vip = row[p];
                    let viq = row[q];
                    row[p] = c * vip - s * viq;
                    row[q] = s * vip + c * viq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| a[j][j].partial_cmp(&a[i][i]).unwrap_or(std::cmp::Ordering::Equal));
    let eigenvalues = order.iter().map(|&i| a[i][i]).collect();
    let vectors = order.iter().map(|&j| (0..m).map(|i| v[i][j]).collect()).collect();
    (eigenvalues, vectors)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn collinear_points_put_all_variance_on_first_component() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, 2.0 * i as f64]).collect();
        let pca = fit_pca(&rows, 2, false).unwrap();
        assert!((pca.variance_share(0) - 1.0).abs() < 1e-12);
        assert!(pca.explained_variance[1].abs() < 1e-9);
    }

    #[test]
    fn diagonal_covariance_recovers_axes() {
        // Independent columns with very different variances: components
        // line up with the axes if standardization is off.
        let mut rows = Vec::new();
        for i in 0..40 {
            let t = (i as f64 / 39.0) * 2.0 - 1.0;
            rows.push(vec![10.0 * t, t * if i % 2 == 0 { 1.0 } else { -1.0 }]);
        }
        let pca = fit_pca(&rows, 2, false).unwrap();
        let c0 = &pca.components[0];
        assert!(c0[0].abs() > 0.99, "first component should follow the wide axis: {c0:?}");
    }

    #[test]
    fn projections_are_uncorrelated() {
        // Deterministic but irregular data.
        let rows: Vec<Vec<f64>> = (0..60)
            .map(|i| {
                let x = (i as f64 * 0.7).sin() * 3.0 + i as f64 * 0.05;
                let y = (i as f64 * 1.3).cos() * 2.0 - x * 0.4;
                let z = x * 0.2 + y * 0.1 + (i as f64 * 2.1).sin();
                vec![x, y, z]
            })
            .collect();
        let pca = fit_pca(&rows, 3, true).unwrap();
        let proj: Vec<Vec<f64>> =
            rows.iter().map(|r| (0..3).map(|j| pca.project(r, j)).collect()).collect();
        for a in 0..3 {
            for b in (a + 1)..3 {
                let ma: f64 = proj.iter().map(|p| p[a]).sum::<f64>() / rows.len() as f64;
                let mb: f64 = proj.iter().map(|p| p[b]).sum::<f64>() / rows.len() as f64;
                let cov: f64 = proj.iter().map(|p| (p[a] - ma) * (p[b] - mb)).sum::<f64>()
                    / (rows.len() - 1) as f64;
                assert!(cov.abs() < 1e-6, "components {a},{b} correlated: {cov}");
            }
        }
    }

    #[test]
    fn full_rank_reconstruction() {
        let rows: Vec<Vec<f64>> = (0..30)
            .map(|i| {
                let t = i as f64;
                vec![t.sin() * 4.0 + 1.0, (t * 0.5).cos() * 2.0, t * 0.1 - 2.0, (t * 0.9).sin()]
            })
            .collect();
        let pca = fit_pca(&rows, 4, true).unwrap();
        for row in &rows {
            let proj: Vec<f64> = (0..4).map(|j| pca.project(row, j)).collect();
            let rec = pca.reconstruct_standardized(&proj);
            for (i, &r) in rec.iter().enumerate() {
                let want = (row[i] - pca.means[i]) / pca.scales[i];
                let scale = want.abs().max(1.0);
                assert!(
                    (r - want).abs() / scale < 1e-8,
                    "feature {i}: reconstructed {r}, want {want}"
                );
            }
        }
    }

    #[test]
    fn too_few_rows_rejected() {
        assert!(matches!(
            fit_pca(&[vec![1.0_f64, 2.0]], 1, true),
            Err(PreprocessError::NotEnoughRows { have: 1 })
        ));
    }

    #[test]
    fn excessive_component_count_rejected() {
        let rows = vec![vec![1.0_f64, 2.0], vec![2.0, 1.0], vec![0.0, 0.5]];
        assert!(matches!(
            fit_pca(&rows, 3, true),
            Err(PreprocessError::BadCandidateCount { d: 3, max: 2 })
        ));
    }
}
