//! Linear one-vs-rest SVM trained by deterministic subgradient descent on
//! the primal objective 0.5 * ||w||^2 + C * sum(hinge).

use serde::{Deserialize, Serialize};

use super::{LinearClassifier, LinearKind, LinearOvrModel};
use crate::error::{CoreError, Result};
use crate::metrics::CLASS_COUNT;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    /// Misclassification tolerance weight.
    pub c: f64,
    pub epochs: usize,
    /// Relative objective change (over a trailing window) below which the
    /// optimizer is considered settled.
    pub tolerance: f64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            c: 0.2,
            epochs: 800,
            tolerance: 1e-6,
        }
    }
}

fn objective(rows: &[Vec<f64>], targets: &[f64], w: &[f64], b: f64, c: f64) -> f64 {
    let reg: f64 = 0.5 * w.iter().map(|x| x * x).sum::<f64>();
    let hinge: f64 = rows
        .iter()
        .zip(targets)
        .map(|(row, &y)| {
            let f = w.iter().zip(row).map(|(wi, xi)| wi * xi).sum::<f64>() + b;
            (1.0 - y * f).max(0.0)
        })
        .sum();
    reg + c * hinge
}

fn fit_binary(
    rows: &[Vec<f64>],
    targets: &[f64],
    cfg: &SvmConfig,
) -> (LinearClassifier, Vec<f64>, bool) {
    let dim = rows[0].len();
    let n = rows.len() as f64;
    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    // Initial step sized against the hinge term so the first updates stay
    // bounded regardless of the sample count.
    let lr0 = 1.0 / (1.0 + cfg.c * n);
    let mut curve = Vec::new();
    let mut converged = false;

    for t in 0..cfg.epochs {
        let lr = lr0 / (1.0 + 0.01 * t as f64);
        let mut grad_w: Vec<f64> = w.clone();
        let mut grad_b = 0.0;
        for (row, &y) in rows.iter().zip(targets) {
            let f = w.iter().zip(row).map(|(wi, xi)| wi * xi).sum::<f64>() + b;
            if y * f < 1.0 {
                for (g, x) in grad_w.iter_mut().zip(row) {
                    *g -= cfg.c * y * x;
                }
                grad_b -= cfg.c * y;
            }
        }
        for (wi, g) in w.iter_mut().zip(&grad_w) {
            *wi -= lr * g;
        }
        b -= lr * grad_b;

        let obj = objective(rows, targets, &w, b, cfg.c);
        curve.push(obj);
        if curve.len() >= 10 {
            let past = curve[curve.len() - 10];
            if (past - obj).abs() <= cfg.tolerance * past.abs().max(1.0) {
                converged = true;
                break;
            }
        }
    }
    (LinearClassifier { weights: w, bias: b }, curve, converged)
}

/// Fits four binary hinge-loss classifiers; non-convergence within the
/// epoch budget is reported as a warning status on the model, not an error.
pub fn train_svm_ovr(rows: &[Vec<f64>], labels: &[usize], cfg: &SvmConfig) -> Result<LinearOvrModel> {
    if rows.is_empty() || rows.len() != labels.len() {
        return Err(CoreError::Contract("svm training needs matching rows/labels".into()));
    }
    if cfg.c < 0.0 {
        return Err(CoreError::Contract("svm C must be non-negative".into()));
    }
    let input_dim = rows[0].len();
    let mut classes = Vec::with_capacity(CLASS_COUNT);
    let mut loss_curves = Vec::with_capacity(CLASS_COUNT);
    let mut converged = true;
    for class in 0..CLASS_COUNT {
        let targets: Vec<f64> = labels
            .iter()
            .map(|&l| if l == class { 1.0 } else { -1.0 })
            .collect();
        let (clf, curve, class_converged) = fit_binary(rows, &targets, cfg);
        classes.push(clf);
        loss_curves.push(curve);
        converged &= class_converged;
    }
    Ok(LinearOvrModel {
        kind: LinearKind::Svm,
        input_dim,
        classes,
        loss_curves,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::{predict, BaselineModel};

    /// Classes 0/1 split along the first axis with a wide margin.
    fn margin_data(scale: f64) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..30 {
            let jitter = (i as f64 / 30.0 - 0.5) * 0.4;
            rows.push(vec![(-2.0 + jitter * 0.1) * scale, jitter * scale]);
            labels.push(0);
            rows.push(vec![(2.0 + jitter * 0.1) * scale, jitter * scale]);
            labels.push(1);
        }
        (rows, labels)
    }

    fn total_hinge(rows: &[Vec<f64>], labels: &[usize], model: &LinearOvrModel, class: usize) -> f64 {
        rows.iter()
            .zip(labels)
            .map(|(row, &l)| {
                let y = if l == class { 1.0 } else { -1.0 };
                (1.0 - y * model.classes[class].decision(row)).max(0.0)
            })
            .sum()
    }

    #[test]
    fn separable_margin_reaches_zero_hinge() {
        let (rows, labels) = margin_data(1.0);
        let cfg = SvmConfig { epochs: 3000, ..SvmConfig::default() };
        let model = train_svm_ovr(&rows, &labels, &cfg).unwrap();
        for class in 0..2 {
            let hinge = total_hinge(&rows, &labels, &model, class);
            assert!(hinge < 1e-3, "class {class} hinge {hinge}");
        }
    }

    #[test]
    fn rescaled_inputs_keep_argmax_predictions() {
        let (rows, labels) = margin_data(1.0);
        let (scaled_rows, _) = margin_data(10.0);
        let cfg = SvmConfig { epochs: 2000, ..SvmConfig::default() };
        let base = train_svm_ovr(&rows, &labels, &cfg).unwrap();
        let scaled = train_svm_ovr(&scaled_rows, &labels, &cfg).unwrap();

        let test: Vec<Vec<f64>> = vec![vec![-1.5, 0.2], vec![1.5, -0.3], vec![-2.5, 0.0], vec![2.5, 0.1]];
        let scaled_test: Vec<Vec<f64>> = test
            .iter()
            .map(|r| r.iter().map(|x| x * 10.0).collect())
            .collect();
        let p1 = predict(&BaselineModel::Linear(base), &test).unwrap();
        let p2 = predict(&BaselineModel::Linear(scaled), &scaled_test).unwrap();
        assert_eq!(p1.labels, p2.labels);
    }

    #[test]
    fn zero_c_drives_weights_to_zero() {
        let (rows, labels) = margin_data(1.0);
        let cfg = SvmConfig { c: 0.0, epochs: 200, ..SvmConfig::default() };
        let model = train_svm_ovr(&rows, &labels, &cfg).unwrap();
        for clf in &model.classes {
            assert!(clf.weights.iter().all(|w| w.abs() < 1e-6));
        }
    }
}
