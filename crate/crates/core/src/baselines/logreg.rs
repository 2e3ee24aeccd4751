//! One-vs-rest logistic regression fit by full-batch gradient descent on the
//! mean log-loss, with step halving so the recorded loss never increases.

use serde::{Deserialize, Serialize};

use super::{LinearClassifier, LinearKind, LinearOvrModel};
use crate::error::{CoreError, Result};
use crate::metrics::CLASS_COUNT;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// Stop once the loss improvement falls below this per epoch.
    pub tolerance: f64,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        LogRegConfig {
            learning_rate: 1.0,
            epochs: 300,
            tolerance: 1e-9,
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn mean_log_loss(rows: &[Vec<f64>], targets: &[f64], w: &[f64], b: f64) -> f64 {
    let mut total = 0.0;
    for (row, &y) in rows.iter().zip(targets) {
        let z = w.iter().zip(row).map(|(wi, xi)| wi * xi).sum::<f64>() + b;
        let p = sigmoid(z).clamp(1e-15, 1.0 - 1e-15);
        total -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
    }
    total / rows.len() as f64
}

fn fit_binary(
    rows: &[Vec<f64>],
    targets: &[f64],
    cfg: &LogRegConfig,
) -> Result<(LinearClassifier, Vec<f64>, bool)> {
    let dim = rows[0].len();
    let n = rows.len() as f64;
    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let mut lr = cfg.learning_rate;
    let mut loss = mean_log_loss(rows, targets, &w, b);
    let mut curve = vec![loss];
    let mut converged = false;

    for _ in 0..cfg.epochs {
        let mut grad_w = vec![0.0; dim];
        let mut grad_b = 0.0;
        for (row, &y) in rows.iter().zip(targets) {
            let z = w.iter().zip(row).map(|(wi, xi)| wi * xi).sum::<f64>() + b;
            let err = sigmoid(z) - y;
            for (g, x) in grad_w.iter_mut().zip(row) {
                *g += err * x;
            }
            grad_b += err;
        }
        for g in grad_w.iter_mut() {
            *g /= n;
        }
        grad_b /= n;

        // Halve the step until the loss stops increasing; gives a monotone
        // recorded trajectory without tuning the rate per problem.
        let mut stepped = false;
        for _ in 0..30 {
            let cand_w: Vec<f64> = w.iter().zip(&grad_w).map(|(wi, g)| wi - lr * g).collect();
            let cand_b = b - lr * grad_b;
            let cand_loss = mean_log_loss(rows, targets, &cand_w, cand_b);
            if cand_loss.is_finite() && cand_loss <= loss {
                let improvement = loss - cand_loss;
                w = cand_w;
                b = cand_b;
                loss = cand_loss;
                stepped = true;
                if improvement < cfg.tolerance {
                    converged = true;
                }
                break;
            }
            lr /= 2.0;
        }
        if !stepped {
            return Err(CoreError::Training(
                "logistic regression could not find a descent step".into(),
            ));
        }
        curve.push(loss);
        if converged {
            break;
        }
    }
    Ok((LinearClassifier { weights: w, bias: b }, curve, converged))
}

/// Fits four binary logistic models, one per distance class; prediction is
/// the argmax of the per-class probabilities.
pub fn train_logreg_ovr(
    rows: &[Vec<f64>],
    labels: &[usize],
    cfg: &LogRegConfig,
) -> Result<LinearOvrModel> {
    if rows.is_empty() || rows.len() != labels.len() {
        return Err(CoreError::Contract("logistic training needs matching rows/labels".into()));
    }
    let input_dim = rows[0].len();
    let mut classes = Vec::with_capacity(CLASS_COUNT);
    let mut loss_curves = Vec::with_capacity(CLASS_COUNT);
    let mut converged = true;
    for class in 0..CLASS_COUNT {
        let targets: Vec<f64> = labels
            .iter()
            .map(|&l| if l == class { 1.0 } else { 0.0 })
            .collect();
        let (clf, curve, class_converged) = fit_binary(rows, &targets, cfg)
            .map_err(|e| CoreError::Training(format!("class {class}: {e}")))?;
        classes.push(clf);
        loss_curves.push(curve);
        converged &= class_converged;
    }
    Ok(LinearOvrModel {
        kind: LinearKind::Logistic,
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

    fn one_d_separable() -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 1..=40 {
            let x = i as f64 / 40.0;
            rows.push(vec![-x]);
            labels.push(0);
            rows.push(vec![x]);
            labels.push(1);
        }
        (rows, labels)
    }

    #[test]
    fn boundary_lands_near_zero() {
        let (rows, labels) = one_d_separable();
        let model = train_logreg_ovr(&rows, &labels, &LogRegConfig::default()).unwrap();
        let model = BaselineModel::Linear(model);
        let p = predict(&model, &[vec![-0.1], vec![0.1]]).unwrap();
        assert_eq!(p.labels, vec![0, 1]);
    }

    #[test]
    fn duplicated_training_set_gives_same_model() {
        let (rows, labels) = one_d_separable();
        let doubled_rows: Vec<Vec<f64>> = rows.iter().chain(rows.iter()).cloned().collect();
        let doubled_labels: Vec<usize> = labels.iter().chain(labels.iter()).copied().collect();
        let a = train_logreg_ovr(&rows, &labels, &LogRegConfig::default()).unwrap();
        let b = train_logreg_ovr(&doubled_rows, &doubled_labels, &LogRegConfig::default()).unwrap();
        // The mean loss is identical, so the descent trajectories agree up
        // to summation roundoff.
        for (ca, cb) in a.classes.iter().zip(&b.classes) {
            for (wa, wb) in ca.weights.iter().zip(&cb.weights) {
                assert!((wa - wb).abs() < 1e-9);
            }
            assert!((ca.bias - cb.bias).abs() < 1e-9);
        }
    }

    #[test]
    fn single_class_data_predicts_that_class() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 / 20.0, 1.0]).collect();
        let labels = vec![2usize; 20];
        let model = train_logreg_ovr(&rows, &labels, &LogRegConfig::default()).unwrap();
        let p = predict(&BaselineModel::Linear(model), &rows).unwrap();
        assert!(p.labels.iter().all(|&l| l == 2));
    }

    #[test]
    fn recorded_loss_never_increases() {
        let (rows, labels) = one_d_separable();
        let model = train_logreg_ovr(&rows, &labels, &LogRegConfig::default()).unwrap();
        for curve in &model.loss_curves {
            for pair in curve.windows(2) {
                assert!(pair[1] <= pair[0] + 1e-15);
            }
        }
    }
}
