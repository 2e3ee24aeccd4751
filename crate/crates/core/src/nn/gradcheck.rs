//! Finite-difference gradient verification, used by the test suites.
//!
//! Central differences with a configurable epsilon; errors are measured
//! relative to the coordinate's own magnitude, floored at a small fraction
//! of the gradient's overall scale so that coordinates whose true gradient
//! is negligible do not drown the check in finite-difference noise.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::network::{cross_entropy, softmax};
use super::{Layer, Network, Tensor};
use crate::error::Result;

pub const DEFAULT_EPSILON: f64 = 1e-5;

fn rel_err(analytic: f64, numeric: f64, scale: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-3 * scale).max(1e-12);
    (analytic - numeric).abs() / denom
}

fn max_abs(values: impl Iterator<Item = f64>) -> f64 {
    values.fold(0.0, |m, v| m.max(v.abs()))
}

/// Checks one layer in isolation against the linear objective
/// `L = sum(output * r)` for a fixed random tensor `r`, covering both the
/// input gradient and (where present) the parameter gradients. Returns the
/// maximum relative error observed.
pub fn check_layer(layer: &mut Layer, input_shape: &[usize], seed: u64, eps: f64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let numel: usize = input_shape.iter().product();
    let input = Tensor::from_vec(
        input_shape,
        (0..numel).map(|_| rng.gen_range(-1.5..1.5)).collect(),
    )?;
    let (out, cache) = layer.forward(&input)?;
    let r = Tensor::from_vec(
        &out.shape,
        (0..out.numel()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )?;
    let (grad_in, param_grads) = layer.backward(&input, &cache, &r)?;

    let objective = |layer: &Layer, input: &Tensor| -> Result<f64> {
        let (out, _) = layer.forward(input)?;
        Ok(out.data.iter().zip(&r.data).map(|(a, b)| a * b).sum())
    };

    let scale = max_abs(
        grad_in
            .data
            .iter()
            .copied()
            .chain(param_grads.iter().flat_map(|(w, b)| w.iter().chain(b).copied())),
    );
    let mut worst = 0.0f64;

    let mut probe = input.clone();
    for i in 0..probe.numel() {
        let orig = probe.data[i];
        probe.data[i] = orig + eps;
        let plus = objective(layer, &probe)?;
        probe.data[i] = orig - eps;
        let minus = objective(layer, &probe)?;
        probe.data[i] = orig;
        worst = worst.max(rel_err(grad_in.data[i], (plus - minus) / (2.0 * eps), scale));
    }

    if let Some((grad_w, grad_b)) = param_grads {
        for which in [0usize, 1] {
            let len = if which == 0 { grad_w.len() } else { grad_b.len() };
            for i in 0..len {
                let analytic = if which == 0 { grad_w[i] } else { grad_b[i] };
                let (w, b) = layer.params_mut().expect("layer had parameter gradients");
                let slot = if which == 0 { &mut w[i] } else { &mut b[i] };
                let orig = *slot;
                *slot = orig + eps;
                let plus = objective(layer, &input)?;
                let (w, b) = layer.params_mut().unwrap();
                let slot = if which == 0 { &mut w[i] } else { &mut b[i] };
                *slot = orig - eps;
                let minus = objective(layer, &input)?;
                let (w, b) = layer.params_mut().unwrap();
                let slot = if which == 0 { &mut w[i] } else { &mut b[i] };
                *slot = orig;
                worst = worst.max(rel_err(analytic, (plus - minus) / (2.0 * eps), scale));
            }
        }
    }
    Ok(worst)
}

fn ce_loss(network: &Network, batch: &Tensor, labels: &[usize]) -> Result<f64> {
    let pass = network.forward(batch)?;
    cross_entropy(&softmax(pass.logits()), labels)
}

/// Verifies the full-network cross-entropy gradients against central finite
/// differences on up to `max_coords` randomly chosen parameter coordinates.
/// Returns the maximum relative error.
pub fn check_network(
    network: &mut Network,
    batch: &Tensor,
    labels: &[usize],
    max_coords: usize,
    seed: u64,
    eps: f64,
) -> Result<f64> {
    let pass = network.forward(batch)?;
    let grads = network.backward_ce(&pass, labels)?;

    // Enumerate every parameter coordinate as (layer, bias?, offset).
    let mut coords = Vec::new();
    for (li, grad) in grads.per_layer.iter().enumerate() {
        if let Some((gw, gb)) = grad {
            coords.extend((0..gw.len()).map(|i| (li, false, i)));
            coords.extend((0..gb.len()).map(|i| (li, true, i)));
        }
    }
    let scale = max_abs(
        grads
            .per_layer
            .iter()
            .flatten()
            .flat_map(|(w, b)| w.iter().chain(b).copied()),
    );

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    coords.shuffle(&mut rng);
    coords.truncate(max_coords);

    let mut worst = 0.0f64;
    for (li, is_bias, offset) in coords {
        let analytic = {
            let (gw, gb) = grads.per_layer[li].as_ref().unwrap();
            if is_bias {
                gb[offset]
            } else {
                gw[offset]
            }
        };
        let poke = |network: &mut Network, delta: f64| {
            let (w, b) = network.layers[li].params_mut().unwrap();
            if is_bias {
                b[offset] += delta;
            } else {
                w[offset] += delta;
            }
        };
        poke(network, eps);
        let plus = ce_loss(network, batch, labels)?;
        poke(network, -2.0 * eps);
        let minus = ce_loss(network, batch, labels)?;
        poke(network, eps);
        worst = worst.max(rel_err(analytic, (plus - minus) / (2.0 * eps), scale));
    }
    Ok(worst)
}
