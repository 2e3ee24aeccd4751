//! Minimal dense-tensor neural engine with reverse-mode gradients: Conv1D,
//! MaxPool1D, dense layers, ReLU, softmax cross-entropy, and mini-batch
//! training with fold-rotation validation.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

mod arch;
pub mod gradcheck;
mod layers;
mod network;
mod serialize;
mod train;

pub use arch::{
    build_ablation_set, build_paper_architectures, cnn_proposed, mlp, ArchitectureSpec, LayerSpec,
};
pub use layers::{Conv1d, Dense, Layer};
pub use network::{cross_entropy, softmax, ForwardPass, Gradients, Network};
pub use serialize::{load_model, save_model};
pub use train::{train, EpochRecord, TrainedModel, TrainingConfig};

/// Dense n-dimensional array of 64-bit floats, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Tensor {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Tensor> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(CoreError::Contract(format!(
                "tensor shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    /// Batch of flat rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Tensor> {
        let width = rows.first().map(|r| r.len()).unwrap_or(0);
        if rows.iter().any(|r| r.len() != width) {
            return Err(CoreError::Contract("ragged rows".into()));
        }
        Ok(Tensor {
            shape: vec![rows.len(), width],
            data: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Leading dimension, the batch size everywhere in this engine.
    pub fn batch(&self) -> usize {
        self.shape.first().copied().unwrap_or(0)
    }

    /// Elements per sample.
    pub fn sample_len(&self) -> usize {
        if self.batch() == 0 {
            0
        } else {
            self.numel() / self.batch()
        }
    }

    pub fn sample(&self, b: usize) -> &[f64] {
        let len = self.sample_len();
        &self.data[b * len..(b + 1) * len]
    }

    /// Cheap finiteness probe: a NaN or infinity anywhere poisons the sum.
    pub fn all_finite(&self) -> bool {
        self.data.iter().sum::<f64>().is_finite()
    }
}
