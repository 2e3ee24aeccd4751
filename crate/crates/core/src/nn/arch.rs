//! Architecture descriptions and the paper's model family: the proposed
//! four-block Conv1D network, the five-hidden-layer MLP, and the layer
//! ablation variants.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Conv1d, Dense, Layer, Network};
use crate::error::{CoreError, Result};
use crate::metrics::CLASS_COUNT;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "layer", rename_all = "snake_case")]
pub enum LayerSpec {
    /// Kernel 3, stride 1, same padding.
    Conv1d { channels: usize },
    Relu,
    /// Width 3, stride 1, same padding.
    MaxPool1d,
    Flatten,
    Dense { units: usize },
    /// Fully-connected output layer to the four distance classes.
    Output,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureSpec {
    pub name: String,
    pub layers: Vec<LayerSpec>,
}

/// Shape state while walking a spec.
enum Flow {
    ChannelSeq { channels: usize, len: usize },
    Flat { dim: usize },
}

fn init_uniform(rng: &mut ChaCha8Rng, count: usize, fan_in: usize) -> Vec<f64> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    (0..count).map(|_| rng.gen_range(-bound..bound)).collect()
}

impl ArchitectureSpec {
    /// Instantiates the network for a flat input width, checking that shapes
    /// chain and that the final width is the class count. Initialization is
    /// fan-in-scaled uniform, fully determined by `seed`.
    pub fn build(&self, input_dim: usize, seed: u64) -> Result<Network> {
        let conv_input = matches!(self.layers.first(), Some(LayerSpec::Conv1d { .. }));
        let mut flow = if conv_input {
            Flow::ChannelSeq { channels: 1, len: input_dim }
        } else {
            Flow::Flat { dim: input_dim }
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(self.layers.len());
        let bad = |what: &str, at: usize| {
            Err(CoreError::Contract(format!(
                "{}: layer {at}: {what}",
                self.name
            )))
        };

        for (i, spec) in self.layers.iter().enumerate() {
            match spec {
                LayerSpec::Conv1d { channels } => {
                    let Flow::ChannelSeq { channels: cin, len } = flow else {
                        return bad("conv1d after flatten", i);
                    };
                    layers.push(Layer::Conv1d(Conv1d {
                        in_channels: cin,
                        out_channels: *channels,
                        weights: init_uniform(&mut rng, channels * cin * 3, cin * 3),
                        bias: vec![0.0; *channels],
                    }));
                    flow = Flow::ChannelSeq { channels: *channels, len };
                }
                LayerSpec::Relu => layers.push(Layer::Relu),
                LayerSpec::MaxPool1d => {
                    if !matches!(flow, Flow::ChannelSeq { .. }) {
                        return bad("maxpool on flat data", i);
                    }
                    layers.push(Layer::MaxPool1d);
                }
                LayerSpec::Flatten => {
                    let Flow::ChannelSeq { channels, len } = flow else {
                        return bad("flatten on flat data", i);
                    };
                    layers.push(Layer::Flatten);
                    flow = Flow::Flat { dim: channels * len };
                }
                LayerSpec::Dense { .. } | LayerSpec::Output => {
                    let units = match spec {
                        LayerSpec::Dense { units } => *units,
                        _ => CLASS_COUNT,
                    };
                    let Flow::Flat { dim } = flow else {
                        return bad("dense on channel data", i);
                    };
                    layers.push(Layer::Dense(Dense {
                        in_dim: dim,
                        out_dim: units,
                        weights: init_uniform(&mut rng, units * dim, dim),
                        bias: vec![0.0; units],
                    }));
                    flow = Flow::Flat { dim: units };
                }
            }
        }

        match flow {
            Flow::Flat { dim } if dim == CLASS_COUNT => {}
            _ => {
                return Err(CoreError::Contract(format!(
                    "{}: final output width must be {CLASS_COUNT}",
                    self.name
                )))
            }
        }
        if !matches!(self.layers.last(), Some(LayerSpec::Output)) {
            return Err(CoreError::Contract(format!(
                "{}: architectures must end in the output layer",
                self.name
            )));
        }

        Ok(Network {
            layers,
            input_dim,
            conv_input,
        })
    }
}

fn conv_block(channels: usize) -> [LayerSpec; 3] {
    [
        LayerSpec::Conv1d { channels },
        LayerSpec::Relu,
        LayerSpec::MaxPool1d,
    ]
}

fn conv_stack(blocks: usize, channels: usize) -> Vec<LayerSpec> {
    let mut layers = Vec::new();
    for _ in 0..blocks {
        layers.extend(conv_block(channels));
    }
    layers.push(LayerSpec::Flatten);
    layers
}

/// The proposed network: four Conv1D blocks (conv + ReLU + max-pool), then
/// two 500-unit hidden layers, then the four-way output.
pub fn cnn_proposed(channels: usize) -> ArchitectureSpec {
    let mut layers = conv_stack(4, channels);
    for _ in 0..2 {
        layers.push(LayerSpec::Dense { units: 500 });
        layers.push(LayerSpec::Relu);
    }
    layers.push(LayerSpec::Output);
    ArchitectureSpec { name: "cnn_proposed".into(), layers }
}

/// The five-hidden-layer, 1500-unit MLP.
pub fn mlp() -> ArchitectureSpec {
    let mut layers = Vec::new();
    for _ in 0..5 {
        layers.push(LayerSpec::Dense { units: 1500 });
        layers.push(LayerSpec::Relu);
    }
    layers.push(LayerSpec::Output);
    ArchitectureSpec { name: "mlp".into(), layers }
}

/// Both deep architectures.
pub fn build_paper_architectures(channels: usize) -> Vec<ArchitectureSpec> {
    vec![cnn_proposed(channels), mlp()]
}

/// The six layer-ablation variants, shallowest first; the last one is the
/// proposed architecture.
pub fn build_ablation_set(channels: usize) -> Vec<ArchitectureSpec> {
    let mut specs = Vec::new();
    for blocks in 1..=4 {
        let mut layers = conv_stack(blocks, channels);
        layers.push(LayerSpec::Output);
        specs.push(ArchitectureSpec {
            name: format!("conv{blocks}_fco"),
            layers,
        });
    }
    let mut layers = conv_stack(4, channels);
    layers.push(LayerSpec::Dense { units: 500 });
    layers.push(LayerSpec::Relu);
    layers.push(LayerSpec::Output);
    specs.push(ArchitectureSpec { name: "conv4_fc1_fco".into(), layers });
    specs.push(cnn_proposed(channels));
    specs
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn proposed_has_four_blocks_two_hidden_one_output() {
        let spec = cnn_proposed(32);
        let convs = spec
            .layers
            .iter()
            .filter(|l| matches!(l, LayerSpec::Conv1d { .. }))
            .count();
        let dense = spec
            .layers
            .iter()
            .filter(|l| matches!(l, LayerSpec::Dense { .. }))
            .count();
        let outputs = spec
            .layers
            .iter()
            .filter(|l| matches!(l, LayerSpec::Output))
            .count();
        assert_eq!((convs, dense, outputs), (4, 2, 1));
    }

    #[test]
    fn mlp_hidden_widths_are_five_times_1500() {
        let spec = mlp();
        let widths: Vec<usize> = spec
            .layers
            .iter()
            .filter_map(|l| match l {
                LayerSpec::Dense { units } => Some(*units),
                _ => None,
            })
            .collect();
        assert_eq!(widths, vec![1500; 5]);
    }

    #[test]
    fn ablation_set_has_six_variants() {
        let set = build_ablation_set(8);
        assert_eq!(set.len(), 6);
        assert_eq!(set.last().unwrap().name, "cnn_proposed");
        for spec in &set {
            spec.build(25, 7).unwrap();
        }
    }

    #[test]
    fn same_seed_builds_identical_parameters() {
        let spec = cnn_proposed(4);
        let a = spec.build(25, 5).unwrap();
        let b = spec.build(25, 5).unwrap();
        assert_eq!(a, b);
        let c = spec.build(25, 6).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn dense_before_flatten_is_rejected() {
        let spec = ArchitectureSpec {
            name: "bad".into(),
            layers: vec![LayerSpec::Conv1d { channels: 2 }, LayerSpec::Output],
        };
        assert!(spec.build(25, 0).is_err());
    }
}
