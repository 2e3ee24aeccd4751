//! Pearson correlation over the feature columns plus the distance target.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PearsonResult {
    pub names: Vec<String>,
    /// Symmetric, unit diagonal for non-constant columns.
    pub matrix: Vec<Vec<f64>>,
    /// Pairs with |r| beyond the threshold, strongest first.
    pub flagged: Vec<(String, String, f64)>,
    /// Columns with zero variance, whose correlations are defined as 0.
    pub degenerate: Vec<String>,
}

/// Correlation matrix over named, equal-length columns. Zero-variance
/// columns get r = 0 everywhere (flagged as degenerate) rather than NaN.
pub fn pearson_matrix(
    columns: &[(String, Vec<f64>)],
    flag_threshold: f64,
) -> Result<PearsonResult> {
    let n = columns
        .first()
        .map(|(_, v)| v.len())
        .ok_or_else(|| CoreError::Contract("pearson needs at least one column".into()))?;
    if n < 2 {
        return Err(CoreError::Contract("pearson needs at least two samples".into()));
    }
    if columns.iter().any(|(_, v)| v.len() != n) {
        return Err(CoreError::Contract("pearson columns differ in length".into()));
    }

    let d = columns.len();
    let means: Vec<f64> = columns
        .iter()
        .map(|(_, v)| v.iter().sum::<f64>() / n as f64)
        .collect();
    let centered: Vec<Vec<f64>> = columns
        .iter()
        .zip(&means)
        .map(|((_, v), m)| v.iter().map(|x| x - m).collect())
        .collect();
    let sumsq: Vec<f64> = centered
        .iter()
        .map(|v| v.iter().map(|x| x * x).sum::<f64>())
        .collect();

    let mut matrix = vec![vec![0.0; d]; d];
    let mut flagged = Vec::new();
    for i in 0..d {
        for j in i..d {
            let r = if sumsq[i] == 0.0 || sumsq[j] == 0.0 {
                0.0
            } else {
                let cov: f64 = centered[i].iter().zip(&centered[j]).map(|(a, b)| a * b).sum();
                cov / (sumsq[i].sqrt() * sumsq[j].sqrt())
            };
            matrix[i][j] = r;
            matrix[j][i] = r;
            if i < j && r.abs() > flag_threshold {
                flagged.push((columns[i].0.clone(), columns[j].0.clone(), r));
            }
        }
    }
    flagged.sort_by(|a, b| b.2.abs().partial_cmp(&a.2.abs()).unwrap());

    let degenerate = columns
        .iter()
        .zip(&sumsq)
        .filter(|(_, s)| **s == 0.0)
        .map(|((name, _), _)| name.clone())
        .collect();

    Ok(PearsonResult {
        names: columns.iter().map(|(n, _)| n.clone()).collect(),
        matrix,
        flagged,
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(name: &str, values: &[f64]) -> (String, Vec<f64>) {
        (name.to_string(), values.to_vec())
    }

    #[test]
    fn self_correlation_is_one() {
        let x = col("x", &[1.0, 2.0, 5.0, 3.0]);
        let result = pearson_matrix(&[x], 0.7).unwrap();
        assert!((result.matrix[0][0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn negated_column_correlates_minus_one() {
        let x = vec![1.0, 2.0, 5.0, 3.0];
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        let result = pearson_matrix(&[col("x", &x), col("neg", &neg)], 0.7).unwrap();
        assert!((result.matrix[0][1] + 1.0).abs() < 1e-12);
        assert_eq!(result.flagged.len(), 1);
    }

    #[test]
    fn near_duplicate_columns_are_flagged() {
        let x: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let noisy: Vec<f64> = x.iter().enumerate().map(|(i, v)| v + 0.001 * (i % 3) as f64).collect();
        let result = pearson_matrix(&[col("x", &x), col("noisy", &noisy)], 0.7).unwrap();
        assert!(result.matrix[0][1] > 0.99);
        assert_eq!(result.flagged.len(), 1);
    }

    #[test]
    fn constant_column_is_degenerate_zero() {
        let x = col("x", &[1.0, 2.0, 3.0]);
        let c = col("c", &[5.0, 5.0, 5.0]);
        let result = pearson_matrix(&[x, c], 0.7).unwrap();
        assert_eq!(result.matrix[0][1], 0.0);
        assert_eq!(result.matrix[1][1], 0.0);
        assert_eq!(result.degenerate, vec!["c".to_string()]);
    }

    #[test]
    fn symmetric_with_unit_diagonal() {
        let a = col("a", &[1.0, 4.0, 2.0, 8.0, 5.0]);
        let b = col("b", &[2.0, 1.0, 7.0, 3.0, 9.0]);
        let c = col("c", &[0.5, 0.25, 0.125, 4.0, 2.0]);
        let result = pearson_matrix(&[a, b, c], 0.7).unwrap();
        for i in 0..3 {
            assert!((result.matrix[i][i] - 1.0).abs() < 1e-12);
            for j in 0..3 {
                assert_eq!(result.matrix[i][j], result.matrix[j][i]);
            }
        }
    }
}
