//! Network assembly: forward/backward drivers, softmax cross-entropy, and
//! prediction.

use serde::{Deserialize, Serialize};

use super::layers::Cache;
use super::{Layer, Tensor};
use crate::error::{CoreError, Result};
use crate::metrics::CLASS_COUNT;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub layers: Vec<Layer>,
    /// Flat input width; conv stacks see it as one channel of this length.
    pub input_dim: usize,
    /// True when the first layer is convolutional, so batches reshape to
    /// [batch, 1, input_dim].
    pub conv_input: bool,
}

/// Activations and caches from one forward pass; `activations[0]` is the
/// (possibly reshaped) input and the last entry holds the logits.
pub struct ForwardPass {
    pub activations: Vec<Tensor>,
    caches: Vec<Cache>,
}

impl ForwardPass {
    pub fn logits(&self) -> &Tensor {
        self.activations.last().unwrap()
    }
}

/// Per-layer parameter gradients, parallel to `Network::layers`.
pub struct Gradients {
    pub per_layer: Vec<Option<(Vec<f64>, Vec<f64>)>>,
    /// Gradient with respect to the network input, in input shape.
    pub input: Tensor,
}

/// Row-wise softmax with the usual max-shift for stability.
pub fn softmax(logits: &Tensor) -> Tensor {
    let width = *logits.shape.last().unwrap();
    let mut out = logits.clone();
    for row in out.data.chunks_mut(width) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Mean categorical cross-entropy of softmax probabilities against class
/// indices.
pub fn cross_entropy(probs: &Tensor, labels: &[usize]) -> Result<f64> {
    let width = *probs.shape.last().unwrap();
    if probs.batch() != labels.len() {
        return Err(CoreError::Contract("loss batch/label mismatch".into()));
    }
    let mut total = 0.0;
    for (row, &label) in probs.data.chunks(width).zip(labels) {
        if label >= width {
            return Err(CoreError::Contract(format!("label {label} out of range")));
        }
        total -= row[label].max(1e-300).ln();
    }
    Ok(total / labels.len() as f64)
}

impl Network {
    fn shape_input(&self, batch: &Tensor) -> Result<Tensor> {
        match batch.shape.as_slice() {
            [b, d] if *d == self.input_dim => {
                let mut t = batch.clone();
                if self.conv_input {
                    t.shape = vec![*b, 1, self.input_dim];
                }
                Ok(t)
            }
            other => Err(CoreError::Contract(format!(
                "network expects [batch, {}], got {other:?}",
                self.input_dim
            ))),
        }
    }

    /// Forward pass keeping every intermediate activation. Non-finite
    /// intermediates are reported with their layer index.
    pub fn forward(&self, batch: &Tensor) -> Result<ForwardPass> {
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        let mut caches = Vec::with_capacity(self.layers.len());
        activations.push(self.shape_input(batch)?);
        for (i, layer) in self.layers.iter().enumerate() {
            let (out, cache) = layer.forward(activations.last().unwrap())?;
            if !out.all_finite() {
                return Err(CoreError::Numeric(format!(
                    "non-finite activation after layer {i} ({})",
                    layer.name()
                )));
            }
            activations.push(out);
            caches.push(cache);
        }
        Ok(ForwardPass { activations, caches })
    }

    /// Class probabilities for a batch of flat rows; rows sum to 1.
    pub fn predict_proba(&self, batch: &Tensor) -> Result<Tensor> {
        Ok(softmax(self.forward(batch)?.logits()))
    }

    /// Argmax class per row plus the probability rows.
    pub fn predict(&self, batch: &Tensor) -> Result<(Vec<usize>, Tensor)> {
        let probs = self.predict_proba(batch)?;
        let width = *probs.shape.last().unwrap();
        let labels = probs
            .data
            .chunks(width)
            .map(|row| {
                row.iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .map(|(i, _)| i)
                    .unwrap()
            })
            .collect();
        Ok((labels, probs))
    }

    /// Backpropagates an arbitrary gradient seed on the logits.
    pub fn backward_from_logits(&self, pass: &ForwardPass, grad_logits: Tensor) -> Result<Gradients> {
        let mut per_layer: Vec<Option<(Vec<f64>, Vec<f64>)>> = vec![None; self.layers.len()];
        let mut grad = grad_logits;
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let (grad_in, param_grads) = layer.backward(&pass.activations[i], &pass.caches[i], &grad)?;
            per_layer[i] = param_grads;
            grad = grad_in;
        }
        Ok(Gradients { per_layer, input: grad })
    }

    /// Exact reverse-mode gradients of the mean cross-entropy loss for every
    /// parameter, plus the input gradient.
    pub fn backward_ce(&self, pass: &ForwardPass, labels: &[usize]) -> Result<Gradients> {
        let logits = pass.logits();
        let batch = logits.batch();
        if batch != labels.len() {
            return Err(CoreError::Contract("backward batch/label mismatch".into()));
        }
        let mut grad = softmax(logits);
        let width = *grad.shape.last().unwrap();
        for (row, &label) in grad.data.chunks_mut(width).zip(labels) {
            row[label] -= 1.0;
            for v in row.iter_mut() {
                *v /= batch as f64;
            }
        }
        self.backward_from_logits(pass, grad)
    }

    /// Gradient of one sample's softmax probability for `target` with
    /// respect to the network input (used by Integrated Gradients).
    pub fn input_gradient_of_prob(&self, sample: &[f64], target: usize) -> Result<Vec<f64>> {
        if target >= CLASS_COUNT {
            return Err(CoreError::Contract(format!("target class {target} out of range")));
        }
        let batch = Tensor::from_vec(&[1, self.input_dim], sample.to_vec())?;
        let pass = self.forward(&batch)?;
        let probs = softmax(pass.logits());
        let p = &probs.data;
        // d p_t / d logit_j = p_t (delta_tj - p_j)
        let seed: Vec<f64> = (0..p.len())
            .map(|j| p[target] * (if j == target { 1.0 } else { 0.0 } - p[j]))
            .collect();
        let seed = Tensor::from_vec(&[1, p.len()], seed)?;
        let grads = self.backward_from_logits(&pass, seed)?;
        if !grads.input.all_finite() {
            return Err(CoreError::Numeric("non-finite input gradient".into()));
        }
        Ok(grads.input.data)
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .filter_map(|l| l.params())
            .map(|(w, b)| w.len() + b.len())
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{build_paper_architectures, ArchitectureSpec, LayerSpec, TrainingConfig};

    fn tiny_net() -> Network {
        let spec = ArchitectureSpec {
            name: "tiny".into(),
            layers: vec![
                LayerSpec::Conv1d { channels: 3 },
                LayerSpec::Relu,
                LayerSpec::MaxPool1d,
                LayerSpec::Flatten,
                LayerSpec::Dense { units: 8 },
                LayerSpec::Relu,
                LayerSpec::Output,
            ],
        };
        spec.build(25, 99).unwrap()
    }

    #[test]
    fn probability_rows_sum_to_one() {
        let net = tiny_net();
        let batch = Tensor::from_rows(&[
            (0..25).map(|i| (i as f64 * 0.37).sin()).collect(),
            (0..25).map(|i| (i as f64 * 0.11).cos()).collect(),
        ])
        .unwrap();
        let probs = net.predict_proba(&batch).unwrap();
        for row in probs.data.chunks(4) {
            let sum: f64 = row.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&p| p > 0.0 && p < 1.0));
        }
    }

    #[test]
    fn uniform_logits_loss_is_ln4() {
        let logits = Tensor::from_vec(&[2, 4], vec![0.7; 8]).unwrap();
        let probs = softmax(&logits);
        let loss = cross_entropy(&probs, &[0, 3]).unwrap();
        assert!((loss - 4.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn confident_correct_prediction_has_zero_loss() {
        let probs = Tensor::from_vec(&[1, 4], vec![0.0, 1.0, 0.0, 0.0]).unwrap();
        let loss = cross_entropy(&probs, &[1]).unwrap();
        assert!(loss.abs() < 1e-12);
    }

    #[test]
    fn spatial_length_preserved_through_conv_blocks() {
        let cfg = TrainingConfig::default();
        let specs = build_paper_architectures(cfg.conv_channels);
        let cnn = specs.iter().find(|s| s.name == "cnn_proposed").unwrap();
        let net = cnn.build(25, 1).unwrap();
        let batch = Tensor::from_rows(&[(0..25).map(|i| i as f64 / 25.0).collect()]).unwrap();
        let pass = net.forward(&batch).unwrap();
        for (layer, act) in net.layers.iter().zip(pass.activations.iter().skip(1)) {
            if let [_, _, len] = act.shape.as_slice() {
                assert_eq!(*len, 25, "length changed after {}", layer.name());
            }
        }
        assert_eq!(pass.logits().shape, vec![1, 4]);
    }
}
