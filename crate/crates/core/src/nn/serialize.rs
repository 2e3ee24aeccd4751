//! Versioned model persistence: architecture and metadata as JSON, the
//! parameters as a little-endian 64-bit float blob in layer order (weights
//! before bias per layer).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ArchitectureSpec, EpochRecord, TrainedModel};
use crate::error::{CoreError, Result};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct ModelHeader {
    format_version: u32,
    spec: ArchitectureSpec,
    input_dim: usize,
    seed: u64,
    parameter_count: usize,
    training_log: Vec<EpochRecord>,
}

/// Writes `<stem>.json` and `<stem>.bin`.
pub fn save_model(model: &TrainedModel, stem: &Path) -> Result<()> {
    let json_path = stem.with_extension("json");
    let bin_path = stem.with_extension("bin");

    let header = ModelHeader {
        format_version: MODEL_FORMAT_VERSION,
        spec: model.spec.clone(),
        input_dim: model.network.input_dim,
        seed: model.seed,
        parameter_count: model.network.parameter_count(),
        training_log: model.training_log.clone(),
    };
    let file = File::create(&json_path).map_err(|e| CoreError::io(json_path.display().to_string(), e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, &header)
        .map_err(|e| CoreError::Validation(format!("serialize model header: {e}")))?;
    w.write_all(b"\n").map_err(|e| CoreError::io(json_path.display().to_string(), e))?;
    w.flush().map_err(|e| CoreError::io(json_path.display().to_string(), e))?;

    let file = File::create(&bin_path).map_err(|e| CoreError::io(bin_path.display().to_string(), e))?;
    let mut w = BufWriter::new(file);
    for layer in &model.network.layers {
        if let Some((weights, bias)) = layer.params() {
            for value in weights.iter().chain(bias) {
                w.write_all(&value.to_le_bytes())
                    .map_err(|e| CoreError::io(bin_path.display().to_string(), e))?;
            }
        }
    }
    w.flush().map_err(|e| CoreError::io(bin_path.display().to_string(), e))?;
    Ok(())
}

/// Loads a model pair written by [`save_model`].
pub fn load_model(stem: &Path) -> Result<TrainedModel> {
    let json_path = stem.with_extension("json");
    let bin_path = stem.with_extension("bin");

    let file = File::open(&json_path).map_err(|e| CoreError::io(json_path.display().to_string(), e))?;
    let header: ModelHeader = serde_json::from_reader(BufReader::new(file))
        .map_err(|e| CoreError::parse(json_path.display().to_string(), e.to_string()))?;
    if header.format_version != MODEL_FORMAT_VERSION {
        return Err(CoreError::Validation(format!(
            "unsupported model format version {}",
            header.format_version
        )));
    }

    // Rebuild the skeleton (seeded, so shapes match), then overwrite every
    // parameter with the stored blob.
    let mut network = header.spec.build(header.input_dim, header.seed)?;
    let file = File::open(&bin_path).map_err(|e| CoreError::io(bin_path.display().to_string(), e))?;
    let mut reader = BufReader::new(file);
    let mut buf = [0u8; 8];
    let mut read_count = 0usize;
    for layer in network.layers.iter_mut() {
        if let Some((weights, bias)) = layer.params_mut() {
            for value in weights.iter_mut().chain(bias.iter_mut()) {
                reader
                    .read_exact(&mut buf)
                    .map_err(|e| CoreError::io(bin_path.display().to_string(), e))?;
                *value = f64::from_le_bytes(buf);
                read_count += 1;
            }
        }
    }
    if read_count != header.parameter_count {
        return Err(CoreError::Validation(format!(
            "parameter blob holds {read_count} values, header says {}",
            header.parameter_count
        )));
    }
    let mut trailing = Vec::new();
    reader
        .read_to_end(&mut trailing)
        .map_err(|e| CoreError::io(bin_path.display().to_string(), e))?;
    if !trailing.is_empty() {
        return Err(CoreError::Validation("parameter blob has trailing bytes".into()));
    }

    Ok(TrainedModel {
        spec: header.spec,
        network,
        training_log: header.training_log,
        seed: header.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{ArchitectureSpec, LayerSpec};

    #[test]
    fn save_load_round_trip() {
        let spec = ArchitectureSpec {
            name: "roundtrip".into(),
            layers: vec![
                LayerSpec::Conv1d { channels: 2 },
                LayerSpec::Relu,
                LayerSpec::MaxPool1d,
                LayerSpec::Flatten,
                LayerSpec::Dense { units: 6 },
                LayerSpec::Relu,
                LayerSpec::Output,
            ],
        };
        let network = spec.build(25, 13).unwrap();
        let model = TrainedModel {
            spec,
            network,
            training_log: vec![],
            seed: 13,
        };
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("model");
        save_model(&model, &stem).unwrap();
        let loaded = load_model(&stem).unwrap();
        assert_eq!(loaded.network, model.network);
        assert_eq!(loaded.spec, model.spec);
    }
}
