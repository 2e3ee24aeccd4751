//! Principal component analysis via cyclic Jacobi rotations on the sample
//! covariance matrix.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Fitted projection: train-set means, components (rows, descending
/// eigenvalue), and the retained dimensionality `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaProjection {
    pub means: Vec<f64>,
    /// `k` rows of length `d`.
    pub components: Vec<Vec<f64>>,
    /// All `d` eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    /// Cumulative explained-variance ratios, one per eigenvalue.
    pub cumulative_explained: Vec<f64>,
    pub k: usize,
    pub variance_target: f64,
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns
/// (eigenvalues, eigenvectors-as-columns), unsorted. Converges when the
/// off-diagonal norm drops below `tol` relative to the matrix norm.
fn jacobi_eigen_sym(mut a: Vec<Vec<f64>>, tol: f64) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = a.len();
    let mut v = vec![vec![0.0; n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let frob: f64 = a
        .iter()
        .flat_map(|r| r.iter())
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt();
    let threshold = tol * frob.max(f64::MIN_POSITIVE);

    for _sweep in 0..200 {
        let off: f64 = (0..n)
            .flat_map(|p| ((p + 1)..n).map(move |q| (p, q)))
            .map(|(p, q)| a[p][q] * a[p][q])
            .sum::<f64>()
            .sqrt();
        if off <= threshold {
            let eigenvalues = (0..n).map(|i| a[i][i]).collect();
            return Ok((eigenvalues, v));
        }
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                if a[p][q] == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    1.0 / (theta - (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                for i in 0..n {
                    let aip = a[i][p];
                    let aiq = a[i][q];
                    a[i][p] = c * aip - s * aiq;
                    a[i][q] = s * aip + c * aiq;
                }
                for i in 0..n {
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
    Err(CoreError::Numeric("jacobi eigendecomposition did not converge".into()))
}

/// Fits PCA on the rows, keeping the smallest k whose cumulative explained
/// variance reaches `variance_target`.
pub fn pca_fit(rows: &[Vec<f64>], variance_target: f64) -> Result<PcaProjection> {
    let n = rows.len();
    if n < 2 {
        return Err(CoreError::Contract("pca needs at least two rows".into()));
    }
    let d = rows[0].len();
    if rows.iter().any(|r| r.len() != d) {
        return Err(CoreError::Contract("pca rows differ in length".into()));
    }

    let mut means = vec![0.0; d];
    for row in rows {
        for (m, x) in means.iter_mut().zip(row) {
            *m += x;
        }
    }
    for m in &mut means {
        *m /= n as f64;
    }

    let mut cov = vec![vec![0.0; d]; d];
    for row in rows {
        let centered: Vec<f64> = row.iter().zip(&means).map(|(x, m)| x - m).collect();
        for i in 0..d {
            for j in i..d {
                cov[i][j] += centered[i] * centered[j];
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            let value = cov[i][j] / (n - 1) as f64;
            if !value.is_finite() {
                return Err(CoreError::Numeric("non-finite covariance".into()));
            }
            cov[i][j] = value;
            cov[j][i] = value;
        }
    }

    let (eigenvalues, vectors) = jacobi_eigen_sym(cov, 1e-12)?;
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| eigenvalues[j].partial_cmp(&eigenvalues[i]).unwrap());

    // Clamp tiny negative eigenvalues produced by roundoff.
    let sorted: Vec<f64> = order.iter().map(|&i| eigenvalues[i].max(0.0)).collect();
    let total: f64 = sorted.iter().sum();
    let mut cumulative = Vec::with_capacity(d);
    let mut running = 0.0;
    for ev in &sorted {
        running += ev;
        cumulative.push(if total > 0.0 { running / total } else { 1.0 });
    }
    let k = cumulative
        .iter()
        .position(|&c| c >= variance_target)
        .map(|p| p + 1)
        .unwrap_or(d);

    let components: Vec<Vec<f64>> = order[..k]
        .iter()
        .map(|&col| (0..d).map(|row| vectors[row][col]).collect())
        .collect();

    Ok(PcaProjection {
        means,
        components,
        eigenvalues: sorted,
        cumulative_explained: cumulative,
        k,
        variance_target,
    })
}

/// Projects rows onto the retained components using the train-set means.
pub fn pca_apply(projection: &PcaProjection, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|row| {
            let centered: Vec<f64> = row.iter().zip(&projection.means).map(|(x, m)| x - m).collect();
            projection
                .components
                .iter()
                .map(|c| c.iter().zip(&centered).map(|(a, b)| a * b).sum())
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn jacobi_recovers_known_eigenvalues() {
        // Symmetric 2x2 with eigenvalues 3 and 1.
        let a = vec![vec![2.0, 1.0], vec![1.0, 2.0]];
        let (mut evs, _) = jacobi_eigen_sym(a, 1e-12).unwrap();
        evs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((evs[0] - 1.0).abs() < 1e-10);
        assert!((evs[1] - 3.0).abs() < 1e-10);
    }

    #[test]
    fn jacobi_satisfies_eigen_equation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 8;
        let mut a = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in i..n {
                let x: f64 = rng.gen_range(-2.0..2.0);
                a[i][j] = x;
                a[j][i] = x;
            }
        }
        let (evs, v) = jacobi_eigen_sym(a.clone(), 1e-12).unwrap();
        for col in 0..n {
            for row in 0..n {
                let av: f64 = (0..n).map(|k| a[row][k] * v[k][col]).sum();
                assert!(
                    (av - evs[col] * v[row][col]).abs() < 1e-8,
                    "A v != lambda v at ({row},{col})"
                );
            }
        }
    }

    #[test]
    fn rank_one_data_keeps_one_component() {
        // Points on a line in 3-D.
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|i| {
                let t = i as f64 * 0.3;
                vec![2.0 * t + 1.0, -t + 4.0, 0.5 * t]
            })
            .collect();
        let p = pca_fit(&rows, 0.95).unwrap();
        assert_eq!(p.k, 1);
    }

    #[test]
    fn isotropic_gaussian_needs_both_components() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rows: Vec<Vec<f64>> = (0..4000)
            .map(|_| {
                // Sum of 12 uniforms, approximately normal, independent dims.
                let g = |rng: &mut ChaCha8Rng| {
                    (0..12).map(|_| rng.gen_range(-0.5..0.5)).sum::<f64>()
                };
                vec![g(&mut rng), g(&mut rng)]
            })
            .collect();
        let p = pca_fit(&rows, 0.95).unwrap();
        assert_eq!(p.k, 2);
        // The leading component explains roughly half the variance.
        assert!(p.cumulative_explained[0] < 0.6, "{}", p.cumulative_explained[0]);
    }

    #[test]
    fn full_dimension_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let rows: Vec<Vec<f64>> = (0..60)
            .map(|_| (0..6).map(|_| rng.gen_range(-3.0..3.0)).collect())
            .collect();
        let mut p = pca_fit(&rows, 1.0).unwrap();
        // Force every component to be retained.
        assert_eq!(p.k, 6);
        let reduced = pca_apply(&p, &rows);

        let mut err = 0.0;
        let mut norm = 0.0;
        for (row, red) in rows.iter().zip(&reduced) {
            for dim in 0..6 {
                let rec: f64 = p
                    .components
                    .iter()
                    .zip(red)
                    .map(|(c, z)| c[dim] * z)
                    .sum::<f64>()
                    + p.means[dim];
                err += (rec - row[dim]).powi(2);
                norm += row[dim].powi(2);
            }
        }
        assert!((err / norm).sqrt() < 1e-8);
        p.components.clear(); // silence unused-mut lint paths
    }

    #[test]
    fn near_duplicate_pairs_reduce_dimensionality() {
        // 25 columns where 6 pairs are near-duplicates: the retained k drops
        // clearly below 25.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 600;
        let mut base: Vec<Vec<f64>> = vec![Vec::with_capacity(n); 19];
        for _ in 0..n {
            for col in base.iter_mut() {
                col.push(rng.gen_range(-1.0..1.0));
            }
        }
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let mut row: Vec<f64> = base.iter().map(|c| c[i]).collect();
                for dup in 0..6 {
                    row.push(base[dup][i] + 0.001 * rng.gen_range(-1.0..1.0));
                }
                row
            })
            .collect();
        assert_eq!(rows[0].len(), 25);
        let p = pca_fit(&rows, 0.95).unwrap();
        assert!(p.k <= 20, "k = {}", p.k);
    }
}
