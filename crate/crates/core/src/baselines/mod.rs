//! The conventional learners the deep models are compared against:
//! one-vs-rest logistic regression, random forest, and a linear SVM.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::metrics::CLASS_COUNT;

mod forest;
mod logreg;
mod svm;

pub use forest::{train_forest, ForestConfig, ForestModel};
pub use logreg::{train_logreg_ovr, LogRegConfig};
pub use svm::{train_svm_ovr, SvmConfig};

pub const BASELINE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearKind {
    Logistic,
    Svm,
}

/// One binary scorer of a one-vs-rest ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearClassifier {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LinearClassifier {
    pub fn decision(&self, row: &[f64]) -> f64 {
        self.weights.iter().zip(row).map(|(w, x)| w * x).sum::<f64>() + self.bias
    }
}

/// Four binary classifiers, one per distance class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearOvrModel {
    pub kind: LinearKind,
    pub input_dim: usize,
    pub classes: Vec<LinearClassifier>,
    /// Per-class training-set loss trajectory (one entry per recorded epoch).
    pub loss_curves: Vec<Vec<f64>>,
    /// False when the optimizer hit its iteration budget without settling.
    pub converged: bool,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl LinearOvrModel {
    /// Per-class scores used for ranking: logistic probability or raw SVM
    /// decision value.
    pub fn scores(&self, row: &[f64]) -> Vec<f64> {
        self.classes
            .iter()
            .map(|c| {
                let d = c.decision(row);
                match self.kind {
                    LinearKind::Logistic => sigmoid(d),
                    LinearKind::Svm => d,
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum BaselineModel {
    Linear(LinearOvrModel),
    Forest(ForestModel),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub labels: Vec<usize>,
    /// One score per class per row, exposed for ROC/AUC.
    pub scores: Vec<Vec<f64>>,
}

impl BaselineModel {
    pub fn input_dim(&self) -> usize {
        match self {
            BaselineModel::Linear(m) => m.input_dim,
            BaselineModel::Forest(m) => m.input_dim,
        }
    }

    pub fn converged(&self) -> bool {
        match self {
            BaselineModel::Linear(m) => m.converged,
            BaselineModel::Forest(_) => true,
        }
    }
}

/// Deterministic labels plus per-class scores for a batch of rows.
pub fn predict(model: &BaselineModel, rows: &[Vec<f64>]) -> Result<Prediction> {
    let dim = model.input_dim();
    if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
        return Err(CoreError::Contract(format!(
            "prediction rows must have {dim} features, got {}",
            bad.len()
        )));
    }
    let mut labels = Vec::with_capacity(rows.len());
    let mut scores = Vec::with_capacity(rows.len());
    for row in rows {
        let s: Vec<f64> = match model {
            BaselineModel::Linear(m) => m.scores(row),
            BaselineModel::Forest(m) => m.class_probabilities(row),
        };
        debug_assert_eq!(s.len(), CLASS_COUNT);
        let label = s
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        labels.push(label);
        scores.push(s);
    }
    Ok(Prediction { labels, scores })
}

#[derive(Debug, Serialize, Deserialize)]
struct BaselineEnvelope {
    format_version: u32,
    model: BaselineModel,
}

/// Persists a baseline model as versioned JSON.
pub fn save_baseline(model: &BaselineModel, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| CoreError::io(path.display().to_string(), e))?;
    let mut w = BufWriter::new(file);
    let envelope = BaselineEnvelope {
        format_version: BASELINE_FORMAT_VERSION,
        model: model.clone(),
    };
    serde_json::to_writer(&mut w, &envelope)
        .map_err(|e| CoreError::Validation(format!("serialize baseline: {e}")))?;
    w.write_all(b"\n").map_err(|e| CoreError::io(path.display().to_string(), e))?;
    w.flush().map_err(|e| CoreError::io(path.display().to_string(), e))?;
    Ok(())
}

pub fn load_baseline(path: &Path) -> Result<BaselineModel> {
    let file = File::open(path).map_err(|e| CoreError::io(path.display().to_string(), e))?;
    let envelope: BaselineEnvelope = serde_json::from_reader(BufReader::new(file))
        .map_err(|e| CoreError::parse(path.display().to_string(), e.to_string()))?;
    if envelope.format_version != BASELINE_FORMAT_VERSION {
        return Err(CoreError::Validation(format!(
            "unsupported baseline format version {}",
            envelope.format_version
        )));
    }
    Ok(envelope.model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_matrix_empty_predictions() {
        let model = BaselineModel::Linear(LinearOvrModel {
            kind: LinearKind::Logistic,
            input_dim: 3,
            classes: (0..4)
                .map(|_| LinearClassifier { weights: vec![0.0; 3], bias: 0.0 })
                .collect(),
            loss_curves: vec![],
            converged: true,
        });
        let p = predict(&model, &[]).unwrap();
        assert!(p.labels.is_empty());
        assert!(p.scores.is_empty());
    }

    #[test]
    fn scores_have_one_entry_per_class() {
        let model = BaselineModel::Linear(LinearOvrModel {
            kind: LinearKind::Svm,
            input_dim: 2,
            classes: (0..4)
                .map(|i| LinearClassifier { weights: vec![i as f64, 1.0], bias: 0.0 })
                .collect(),
            loss_curves: vec![],
            converged: true,
        });
        let p = predict(&model, &[vec![1.0, 2.0], vec![0.0, 0.0]]).unwrap();
        assert_eq!(p.scores.len(), 2);
        assert!(p.scores.iter().all(|s| s.len() == 4));
    }

    #[test]
    fn dimension_mismatch_is_contract_error() {
        let model = BaselineModel::Linear(LinearOvrModel {
            kind: LinearKind::Logistic,
            input_dim: 4,
            classes: (0..4)
                .map(|_| LinearClassifier { weights: vec![0.0; 4], bias: 0.0 })
                .collect(),
            loss_curves: vec![],
            converged: true,
        });
        assert!(predict(&model, &[vec![1.0, 2.0]]).is_err());
    }
}
