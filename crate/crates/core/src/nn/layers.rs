//! Layer forward/backward kernels. All convolutions are kernel 3, stride 1,
//! same padding; pooling is width 3, stride 1, same padding with -inf.
//! Reductions run in a fixed order (parallelism is over independent output
//! elements only), so results do not depend on thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{CoreError, Result};

pub const KERNEL: usize = 3;
pub const POOL_WIDTH: usize = 3;

/// Dot product over eight independent accumulators. Breaking the serial
/// dependency chain is what lets the compiler vectorize the reduction; the
/// summation order is fixed, so results stay deterministic.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 8];
    let mut chunks_a = a.chunks_exact(8);
    let mut chunks_b = b.chunks_exact(8);
    for (ca, cb) in (&mut chunks_a).zip(&mut chunks_b) {
        for k in 0..8 {
            acc[k] += ca[k] * cb[k];
        }
    }
    let mut tail = 0.0;
    for (x, y) in chunks_a.remainder().iter().zip(chunks_b.remainder()) {
        tail += x * y;
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conv1d {
    pub in_channels: usize,
    pub out_channels: usize,
    /// `[out][in][3]`, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    /// `[out][in]`, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Layer {
    Conv1d(Conv1d),
    Relu,
    MaxPool1d,
    Flatten,
    Dense(Dense),
}

/// Per-layer state kept from the forward pass for the backward pass.
#[derive(Debug, Clone)]
pub enum Cache {
    None,
    /// Chosen source position per pooled output element.
    Argmax(Vec<u32>),
}

impl Layer {
    pub fn name(&self) -> &'static str {
        match self {
            Layer::Conv1d(_) => "conv1d",
            Layer::Relu => "relu",
            Layer::MaxPool1d => "maxpool1d",
            Layer::Flatten => "flatten",
            Layer::Dense(_) => "dense",
        }
    }

    /// (weights, bias) for parameterized layers.
    pub fn params(&self) -> Option<(&[f64], &[f64])> {
        match self {
            Layer::Conv1d(c) => Some((&c.weights, &c.bias)),
            Layer::Dense(d) => Some((&d.weights, &d.bias)),
            _ => None,
        }
    }

    pub fn params_mut(&mut self) -> Option<(&mut Vec<f64>, &mut Vec<f64>)> {
        match self {
            Layer::Conv1d(c) => Some((&mut c.weights, &mut c.bias)),
            Layer::Dense(d) => Some((&mut d.weights, &mut d.bias)),
            _ => None,
        }
    }

    pub fn forward(&self, input: &Tensor) -> Result<(Tensor, Cache)> {
        match self {
            Layer::Conv1d(c) => c.forward(input).map(|t| (t, Cache::None)),
            Layer::Relu => Ok((relu_forward(input), Cache::None)),
            Layer::MaxPool1d => maxpool_forward(input),
            Layer::Flatten => Ok((flatten_forward(input)?, Cache::None)),
            Layer::Dense(d) => d.forward(input).map(|t| (t, Cache::None)),
        }
    }

    /// Returns the gradient with respect to the layer input plus parameter
    /// gradients, given the layer input and the output gradient.
    pub fn backward(
        &self,
        input: &Tensor,
        cache: &Cache,
        grad_out: &Tensor,
    ) -> Result<(Tensor, Option<(Vec<f64>, Vec<f64>)>)> {
        match self {
            Layer::Conv1d(c) => {
                let (gin, gw, gb) = c.backward(input, grad_out);
                Ok((gin, Some((gw, gb))))
            }
            Layer::Relu => Ok((relu_backward(input, grad_out), None)),
            Layer::MaxPool1d => {
                let Cache::Argmax(argmax) = cache else {
                    return Err(CoreError::Contract("maxpool backward without cache".into()));
                };
                Ok((maxpool_backward(input, argmax, grad_out), None))
            }
            Layer::Flatten => {
                let mut gin = grad_out.clone();
                gin.shape = input.shape.clone();
                Ok((gin, None))
            }
            Layer::Dense(d) => {
                let (gin, gw, gb) = d.backward(input, grad_out);
                Ok((gin, Some((gw, gb))))
            }
        }
    }
}

impl Conv1d {
    fn check_input(&self, input: &Tensor) -> Result<(usize, usize)> {
        match input.shape.as_slice() {
            [b, c, l] if *c == self.in_channels => Ok((*b, *l)),
            other => Err(CoreError::Contract(format!(
                "conv1d expects [batch, {}, len], got {other:?}",
                self.in_channels
            ))),
        }
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        let (batch, len) = self.check_input(input)?;
        let (cin, cout) = (self.in_channels, self.out_channels);
        let mut out = Tensor::zeros(&[batch, cout, len]);

        out.data
            .par_chunks_mut(cout * len)
            .zip(input.data.par_chunks(cin * len))
            .for_each(|(y, x)| {
                for co in 0..cout {
                    let yrow = &mut y[co * len..(co + 1) * len];
                    yrow.fill(self.bias[co]);
                    for ci in 0..cin {
                        let xrow = &x[ci * len..(ci + 1) * len];
                        let w = &self.weights[(co * cin + ci) * KERNEL..][..KERNEL];
                        for pos in 1..len {
                            yrow[pos] += w[0] * xrow[pos - 1];
                        }
                        for pos in 0..len {
                            yrow[pos] += w[1] * xrow[pos];
                        }
                        for pos in 0..len - 1 {
                            yrow[pos] += w[2] * xrow[pos + 1];
                        }
                    }
                }
            });
        Ok(out)
    }

    pub fn backward(&self, input: &Tensor, grad_out: &Tensor) -> (Tensor, Vec<f64>, Vec<f64>) {
        let (batch, len) = (input.shape[0], input.shape[2]);
        let (cin, cout) = (self.in_channels, self.out_channels);
        let mut grad_in = Tensor::zeros(&input.shape);

        grad_in
            .data
            .par_chunks_mut(cin * len)
            .zip(grad_out.data.par_chunks(cout * len))
            .for_each(|(gx, gy)| {
                for ci in 0..cin {
                    let gxrow = &mut gx[ci * len..(ci + 1) * len];
                    for co in 0..cout {
                        let gyrow = &gy[co * len..(co + 1) * len];
                        let w = &self.weights[(co * cin + ci) * KERNEL..][..KERNEL];
                        for pos in 0..len - 1 {
                            gxrow[pos] += w[0] * gyrow[pos + 1];
                        }
                        for pos in 0..len {
                            gxrow[pos] += w[1] * gyrow[pos];
                        }
                        for pos in 1..len {
                            gxrow[pos] += w[2] * gyrow[pos - 1];
                        }
                    }
                }
            });

        // Parameter gradients: parallel over output channels, batch summed
        // sequentially inside so the reduction order is fixed.
        let mut grad_w = vec![0.0; self.weights.len()];
        let mut grad_b = vec![0.0; self.bias.len()];
        grad_w
            .par_chunks_mut(cin * KERNEL)
            .zip(grad_b.par_iter_mut())
            .enumerate()
            .for_each(|(co, (gw, gb))| {
                for b in 0..batch {
                    let x = &input.data[b * cin * len..(b + 1) * cin * len];
                    let gyrow = &grad_out.data[(b * cout + co) * len..][..len];
                    for ci in 0..cin {
                        let xrow = &x[ci * len..(ci + 1) * len];
                        let g = &mut gw[ci * KERNEL..(ci + 1) * KERNEL];
                        let mut g0 = 0.0;
                        for pos in 1..len {
                            g0 += gyrow[pos] * xrow[pos - 1];
                        }
                        let mut g1 = 0.0;
                        for pos in 0..len {
                            g1 += gyrow[pos] * xrow[pos];
                        }
                        let mut g2 = 0.0;
                        for pos in 0..len - 1 {
                            g2 += gyrow[pos] * xrow[pos + 1];
                        }
                        g[0] += g0;
                        g[1] += g1;
                        g[2] += g2;
                    }
                    *gb += gyrow.iter().sum::<f64>();
                }
            });

        (grad_in, grad_w, grad_b)
    }
}

impl Dense {
    fn check_input(&self, input: &Tensor) -> Result<usize> {
        match input.shape.as_slice() {
            [b, d] if *d == self.in_dim => Ok(*b),
            other => Err(CoreError::Contract(format!(
                "dense expects [batch, {}], got {other:?}",
                self.in_dim
            ))),
        }
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        let batch = self.check_input(input)?;
        let (din, dout) = (self.in_dim, self.out_dim);
        let mut out = Tensor::zeros(&[batch, dout]);
        out.data
            .par_chunks_mut(dout)
            .zip(input.data.par_chunks(din))
            .for_each(|(y, x)| {
                for (o, yo) in y.iter_mut().enumerate() {
                    let w = &self.weights[o * din..(o + 1) * din];
                    *yo = self.bias[o] + dot(w, x);
                }
            });
        Ok(out)
    }

    pub fn backward(&self, input: &Tensor, grad_out: &Tensor) -> (Tensor, Vec<f64>, Vec<f64>) {
        let batch = input.shape[0];
        let (din, dout) = (self.in_dim, self.out_dim);

        let mut grad_in = Tensor::zeros(&input.shape);
        grad_in
            .data
            .par_chunks_mut(din)
            .zip(grad_out.data.par_chunks(dout))
            .for_each(|(gx, gy)| {
                for (o, g) in gy.iter().enumerate() {
                    if *g == 0.0 {
                        continue;
                    }
                    let w = &self.weights[o * din..(o + 1) * din];
                    for (gxi, wi) in gx.iter_mut().zip(w) {
                        *gxi += g * wi;
                    }
                }
            });

        let mut grad_w = vec![0.0; self.weights.len()];
        let mut grad_b = vec![0.0; self.bias.len()];
        grad_w
            .par_chunks_mut(din)
            .zip(grad_b.par_iter_mut())
            .enumerate()
            .for_each(|(o, (gw, gb))| {
                for b in 0..batch {
                    let g = grad_out.data[b * dout + o];
                    if g == 0.0 {
                        continue;
                    }
                    *gb += g;
                    let x = &input.data[b * din..(b + 1) * din];
                    for (gwi, xi) in gw.iter_mut().zip(x) {
                        *gwi += g * xi;
                    }
                }
            });

        (grad_in, grad_w, grad_b)
    }
}

fn relu_forward(input: &Tensor) -> Tensor {
    Tensor {
        shape: input.shape.clone(),
        data: input.data.iter().map(|&x| x.max(0.0)).collect(),
    }
}

fn relu_backward(input: &Tensor, grad_out: &Tensor) -> Tensor {
    Tensor {
        shape: input.shape.clone(),
        data: input
            .data
            .iter()
            .zip(&grad_out.data)
            .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
            .collect(),
    }
}

fn flatten_forward(input: &Tensor) -> Result<Tensor> {
    match input.shape.as_slice() {
        [b, c, l] => Ok(Tensor {
            shape: vec![*b, c * l],
            data: input.data.clone(),
        }),
        other => Err(CoreError::Contract(format!(
            "flatten expects [batch, channels, len], got {other:?}"
        ))),
    }
}

fn maxpool_forward(input: &Tensor) -> Result<(Tensor, Cache)> {
    let [batch, channels, len] = input.shape.as_slice() else {
        return Err(CoreError::Contract(format!(
            "maxpool expects [batch, channels, len], got {:?}",
            input.shape
        )));
    };
    let (batch, channels, len) = (*batch, *channels, *len);
    let mut out = Tensor::zeros(&[batch, channels, len]);
    let mut argmax = vec![0u32; batch * channels * len];

    out.data
        .par_chunks_mut(len)
        .zip(argmax.par_chunks_mut(len))
        .zip(input.data.par_chunks(len))
        .for_each(|((y, arg), x)| {
            for pos in 0..len {
                let lo = pos.saturating_sub(1);
                let hi = (pos + POOL_WIDTH / 2).min(len - 1);
                let mut best = lo;
                for i in (lo + 1)..=hi {
                    if x[i] > x[best] {
                        best = i;
                    }
                }
                y[pos] = x[best];
                arg[pos] = best as u32;
            }
        });
    Ok((out, Cache::Argmax(argmax)))
}

fn maxpool_backward(input: &Tensor, argmax: &[u32], grad_out: &Tensor) -> Tensor {
    let len = *input.shape.last().unwrap();
    let mut grad_in = Tensor::zeros(&input.shape);
    grad_in
        .data
        .par_chunks_mut(len)
        .zip(argmax.par_chunks(len))
        .zip(grad_out.data.par_chunks(len))
        .for_each(|((gx, arg), gy)| {
            for pos in 0..len {
                gx[arg[pos] as usize] += gy[pos];
            }
        });
    grad_in
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conv(weights: Vec<f64>, bias: Vec<f64>, cin: usize, cout: usize) -> Conv1d {
        Conv1d {
            in_channels: cin,
            out_channels: cout,
            weights,
            bias,
        }
    }

    #[test]
    fn identity_kernel_reproduces_input() {
        let layer = conv(vec![0.0, 1.0, 0.0], vec![0.0], 1, 1);
        let input = Tensor::from_vec(&[1, 1, 5], vec![3.0, -1.0, 4.0, 1.0, 5.0]).unwrap();
        let out = layer.forward(&input).unwrap();
        assert_eq!(out.data, input.data);
    }

    #[test]
    fn hand_evaluated_edge_kernel() {
        // Input (1,2,3,4), kernel (1,0,-1), zero padding: windows
        // (0,1,2) -> -2, (1,2,3) -> -2, (2,3,4) -> -2, (3,4,0) -> 3.
        let layer = conv(vec![1.0, 0.0, -1.0], vec![0.0], 1, 1);
        let input = Tensor::from_vec(&[1, 1, 4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let out = layer.forward(&input).unwrap();
        assert_eq!(out.data, vec![-2.0, -2.0, -2.0, 3.0]);
    }

    #[test]
    fn zero_input_gives_bias() {
        let layer = conv(vec![0.3, -0.7, 0.9, 0.1, 0.2, 0.4], vec![1.5, -2.0], 1, 2);
        let input = Tensor::zeros(&[2, 1, 6]);
        let out = layer.forward(&input).unwrap();
        for b in 0..2 {
            assert!(out.sample(b)[..6].iter().all(|&v| v == 1.5));
            assert!(out.sample(b)[6..].iter().all(|&v| v == -2.0));
        }
    }

    #[test]
    fn conv_shape_mismatch_is_contract_error() {
        let layer = conv(vec![0.0, 1.0, 0.0], vec![0.0], 1, 1);
        let input = Tensor::zeros(&[1, 2, 5]);
        assert!(layer.forward(&input).is_err());
    }

    #[test]
    fn maxpool_hand_example() {
        // (1,5,2,4) with -inf padding: (5,5,5,4).
        let input = Tensor::from_vec(&[1, 1, 4], vec![1.0, 5.0, 2.0, 4.0]).unwrap();
        let (out, _) = maxpool_forward(&input).unwrap();
        assert_eq!(out.data, vec![5.0, 5.0, 5.0, 4.0]);
    }

    #[test]
    fn maxpool_constant_input() {
        let input = Tensor::from_vec(&[1, 2, 3], vec![2.5; 6]).unwrap();
        let (out, _) = maxpool_forward(&input).unwrap();
        assert_eq!(out.data, vec![2.5; 6]);
    }

    #[test]
    fn maxpool_dominates_input() {
        let input = Tensor::from_vec(
            &[1, 1, 8],
            vec![0.3, -2.0, 1.7, 0.0, -0.4, 2.2, -1.0, 0.9],
        )
        .unwrap();
        let (out, _) = maxpool_forward(&input).unwrap();
        for (y, x) in out.data.iter().zip(&input.data) {
            assert!(y >= x);
        }
    }

    #[test]
    fn dense_forward_matches_hand_product() {
        let layer = Dense {
            in_dim: 2,
            out_dim: 2,
            weights: vec![1.0, 2.0, -1.0, 0.5],
            bias: vec![0.1, -0.1],
        };
        let input = Tensor::from_vec(&[1, 2], vec![3.0, 4.0]).unwrap();
        let out = layer.forward(&input).unwrap();
        assert_eq!(out.data, vec![3.0 + 8.0 + 0.1, -3.0 + 2.0 - 0.1]);
    }
}
