//! Integrated Gradients over any differentiable trained model, averaged
//! into per-feature weights.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::nn::{Network, Tensor};

/// Baseline input choice. Zeros is the origin of the normalized feature
/// space, which keeps the baseline score near uninformative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum BaselinePolicy {
    Zeros,
    Custom { values: Vec<f64> },
}

impl BaselinePolicy {
    pub fn materialize(&self, dim: usize) -> Result<Vec<f64>> {
        match self {
            BaselinePolicy::Zeros => Ok(vec![0.0; dim]),
            BaselinePolicy::Custom { values } => {
                if values.len() != dim {
                    return Err(CoreError::Contract(format!(
                        "baseline has {} entries, inputs have {dim}",
                        values.len()
                    )));
                }
                Ok(values.clone())
            }
        }
    }
}

/// Path integral of an arbitrary scalar function's gradient along the
/// straight line from `baseline` to `x`, midpoint rule with `steps` points.
/// `grad_fn` returns the gradient of F at a point.
pub fn integrated_gradients_fn<G>(
    grad_fn: G,
    x: &[f64],
    baseline: &[f64],
    steps: usize,
) -> Result<Vec<f64>>
where
    G: Fn(&[f64]) -> Result<Vec<f64>>,
{
    if steps == 0 {
        return Err(CoreError::Contract("integrated gradients needs at least one step".into()));
    }
    if x.len() != baseline.len() {
        return Err(CoreError::Contract("input and baseline dimensions differ".into()));
    }
    let dim = x.len();
    let mut avg = vec![0.0; dim];
    for s in 1..=steps {
        let alpha = (s as f64 - 0.5) / steps as f64;
        let point: Vec<f64> = baseline
            .iter()
            .zip(x)
            .map(|(b, xi)| b + alpha * (xi - b))
            .collect();
        let grad = grad_fn(&point)?;
        if grad.len() != dim {
            return Err(CoreError::Contract("gradient dimension mismatch".into()));
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(CoreError::Numeric("non-finite gradient along the path".into()));
        }
        for (a, g) in avg.iter_mut().zip(&grad) {
            *a += g;
        }
    }
    Ok(avg
        .iter()
        .zip(x.iter().zip(baseline))
        .map(|(a, (xi, bi))| (xi - bi) * a / steps as f64)
        .collect())
}

/// Integrated Gradients of the model's softmax probability for `target`.
pub fn integrated_gradients(
    network: &Network,
    x: &[f64],
    baseline: &[f64],
    steps: usize,
    target: usize,
) -> Result<Vec<f64>> {
    integrated_gradients_fn(
        |point| network.input_gradient_of_prob(point, target),
        x,
        baseline,
        steps,
    )
}

fn prob_of(network: &Network, x: &[f64], target: usize) -> Result<f64> {
    let batch = Tensor::from_vec(&[1, x.len()], x.to_vec())?;
    let probs = network.predict_proba(&batch)?;
    Ok(probs.data[target])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionReport {
    /// Ordered by the feature contract.
    pub feature_names: Vec<String>,
    /// Signed mean IG weight per feature.
    pub mean_weights: Vec<f64>,
    /// Display copy sorted by weight, strongest positive first.
    pub sorted_weights: Vec<(String, f64)>,
    pub baseline: Vec<f64>,
    pub steps: usize,
    pub samples: usize,
    /// Which output the gradients were taken against.
    pub target_policy: String,
    /// Where the attributed samples came from (recorded by the caller).
    pub sample_source: String,
    pub mean_abs_completeness_residual: f64,
    pub max_abs_completeness_residual: f64,
}

/// Attributes every row against its predicted class and averages the signed
/// per-feature weights. Completeness residuals |sum(IG) - (F(x) - F(x'))|
/// are tracked per sample.
pub fn attribute_dataset(
    network: &Network,
    rows: &[Vec<f64>],
    feature_names: &[String],
    policy: &BaselinePolicy,
    steps: usize,
    sample_source: &str,
) -> Result<AttributionReport> {
    if rows.is_empty() {
        return Err(CoreError::Contract("attribution needs at least one sample".into()));
    }
    let dim = rows[0].len();
    if feature_names.len() != dim {
        return Err(CoreError::Contract("feature names do not match input width".into()));
    }
    let baseline = policy.materialize(dim)?;

    let per_sample: Result<Vec<(Vec<f64>, f64)>> = rows
        .par_iter()
        .map(|row| {
            let batch = Tensor::from_vec(&[1, dim], row.clone())?;
            let (pred, _) = network.predict(&batch)?;
            let target = pred[0];
            let ig = integrated_gradients(network, row, &baseline, steps, target)?;
            let residual = ig.iter().sum::<f64>()
                - (prob_of(network, row, target)? - prob_of(network, &baseline, target)?);
            Ok((ig, residual))
        })
        .collect();
    let per_sample = per_sample?;

    let mut mean_weights = vec![0.0; dim];
    let mut residual_sum = 0.0;
    let mut residual_max = 0.0f64;
    for (ig, residual) in &per_sample {
        for (m, v) in mean_weights.iter_mut().zip(ig) {
            *m += v;
        }
        residual_sum += residual.abs();
        residual_max = residual_max.max(residual.abs());
    }
    for m in mean_weights.iter_mut() {
        *m /= per_sample.len() as f64;
    }

    let mut sorted_weights: Vec<(String, f64)> = feature_names
        .iter()
        .cloned()
        .zip(mean_weights.iter().copied())
        .collect();
    sorted_weights.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());

    Ok(AttributionReport {
        feature_names: feature_names.to_vec(),
        mean_weights,
        sorted_weights,
        baseline,
        steps,
        samples: rows.len(),
        target_policy: "predicted_class".into(),
        sample_source: sample_source.into(),
        mean_abs_completeness_residual: residual_sum / per_sample.len() as f64,
        max_abs_completeness_residual: residual_max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{ArchitectureSpec, Layer, LayerSpec};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn logistic_1d_net(w: f64) -> Network {
        // Logits (w x, 0, 0, 0): the class-0 probability is a 1-D logistic
        // curve in x.
        let spec = ArchitectureSpec {
            name: "logistic1d".into(),
            layers: vec![LayerSpec::Output],
        };
        let mut net = spec.build(1, 0).unwrap();
        if let Layer::Dense(d) = &mut net.layers[0] {
            d.weights = vec![w, 0.0, 0.0, 0.0];
            d.bias = vec![0.0; 4];
        }
        net
    }

    #[test]
    fn zero_path_gives_zero_attribution() {
        let net = logistic_1d_net(1.3);
        let ig = integrated_gradients(&net, &[0.7], &[0.7], 25, 0).unwrap();
        assert_eq!(ig, vec![0.0]);
    }

    #[test]
    fn one_dimensional_quadrature_matches_closed_form() {
        // In one dimension the exact path integral is F(x) - F(0) by the
        // fundamental theorem of calculus.
        let net = logistic_1d_net(2.0);
        let x = [1.4];
        let exact = prob_of(&net, &x, 0).unwrap() - prob_of(&net, &[0.0], 0).unwrap();
        let coarse = integrated_gradients(&net, &x, &[0.0], 10, 0).unwrap()[0];
        let fine = integrated_gradients(&net, &x, &[0.0], 200, 0).unwrap()[0];
        assert!((fine - exact).abs() < 1e-5, "fine {fine} vs exact {exact}");
        assert!((fine - exact).abs() <= (coarse - exact).abs());
    }

    #[test]
    fn affine_objective_is_exact_at_one_step() {
        let a = [0.5, -1.25, 2.0];
        let grad_fn = |_point: &[f64]| Ok(a.to_vec());
        let x = [1.0, 2.0, -0.5];
        let baseline = [0.2, -0.3, 0.1];
        let ig = integrated_gradients_fn(grad_fn, &x, &baseline, 1).unwrap();
        for i in 0..3 {
            let expected = (x[i] - baseline[i]) * a[i];
            assert!((ig[i] - expected).abs() < 1e-15);
        }
    }

    fn small_cnn(seed: u64) -> Network {
        let spec = ArchitectureSpec {
            name: "small_cnn".into(),
            layers: vec![
                LayerSpec::Conv1d { channels: 4 },
                LayerSpec::Relu,
                LayerSpec::MaxPool1d,
                LayerSpec::Flatten,
                LayerSpec::Dense { units: 12 },
                LayerSpec::Relu,
                LayerSpec::Output,
            ],
        };
        spec.build(25, seed).unwrap()
    }

    #[test]
    fn completeness_residual_shrinks_with_steps() {
        let net = small_cnn(31);
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let baseline = vec![0.0; 25];
        for round in 0..5 {
            let x: Vec<f64> = (0..25).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let exact = prob_of(&net, &x, 1).unwrap() - prob_of(&net, &baseline, 1).unwrap();
            let at = |m: usize| {
                integrated_gradients(&net, &x, &baseline, m, 1)
                    .unwrap()
                    .iter()
                    .sum::<f64>()
            };
            let r300 = (at(300) - exact).abs();
            assert!(r300 < 1e-3, "round {round}: residual {r300}");
        }
    }

    #[test]
    fn single_sample_report_equals_its_ig() {
        let net = small_cnn(33);
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let row: Vec<f64> = (0..25).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let names: Vec<String> = (0..25).map(|i| format!("f{i}")).collect();
        let report = attribute_dataset(
            &net,
            &[row.clone()],
            &names,
            &BaselinePolicy::Zeros,
            50,
            "unit-test",
        )
        .unwrap();
        let batch = Tensor::from_vec(&[1, 25], row.clone()).unwrap();
        let (pred, _) = net.predict(&batch).unwrap();
        let ig = integrated_gradients(&net, &row, &vec![0.0; 25], 50, pred[0]).unwrap();
        assert_eq!(report.mean_weights, ig);
    }

    #[test]
    fn permanently_zero_feature_has_zero_weight() {
        let net = small_cnn(35);
        let mut rng = ChaCha8Rng::seed_from_u64(36);
        let rows: Vec<Vec<f64>> = (0..8)
            .map(|_| {
                let mut r: Vec<f64> = (0..25).map(|_| rng.gen_range(-1.0..1.0)).collect();
                r[17] = 0.0;
                r
            })
            .collect();
        let names: Vec<String> = (0..25).map(|i| format!("f{i}")).collect();
        let report =
            attribute_dataset(&net, &rows, &names, &BaselinePolicy::Zeros, 25, "unit-test").unwrap();
        assert_eq!(report.mean_weights[17], 0.0);
    }

    #[test]
    fn deterministic_reports() {
        let net = small_cnn(37);
        let mut rng = ChaCha8Rng::seed_from_u64(38);
        let rows: Vec<Vec<f64>> = (0..6)
            .map(|_| (0..25).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let names: Vec<String> = (0..25).map(|i| format!("f{i}")).collect();
        let a = attribute_dataset(&net, &rows, &names, &BaselinePolicy::Zeros, 40, "s").unwrap();
        let b = attribute_dataset(&net, &rows, &names, &BaselinePolicy::Zeros, 40, "s").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_sample_set_is_error() {
        let net = small_cnn(39);
        let names: Vec<String> = (0..25).map(|i| format!("f{i}")).collect();
        assert!(attribute_dataset(&net, &[], &names, &BaselinePolicy::Zeros, 10, "s").is_err());
    }
}
