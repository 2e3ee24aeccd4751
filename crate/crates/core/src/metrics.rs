//! Confusion-matrix metrics, macro-averaging, ROC curves, and one-vs-rest
//! AUC.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::geo::DistanceLabel;

pub const CLASS_COUNT: usize = DistanceLabel::COUNT;

/// 4x4 counts, rows = true label, cols = predicted label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; CLASS_COUNT]; CLASS_COUNT],
}

pub fn confusion(truth: &[DistanceLabel], predicted: &[DistanceLabel]) -> Result<ConfusionMatrix> {
    if truth.len() != predicted.len() {
        return Err(CoreError::Contract(format!(
            "confusion length mismatch: {} truth vs {} predicted",
            truth.len(),
            predicted.len()
        )));
    }
    let mut counts = [[0u64; CLASS_COUNT]; CLASS_COUNT];
    for (t, p) in truth.iter().zip(predicted) {
        counts[t.index()][p.index()] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// One-vs-rest reduction for a class: (TP, FP, FN, TN).
    pub fn ovr(&self, class: usize) -> (u64, u64, u64, u64) {
        let tp = self.counts[class][class];
        let fp: u64 = (0..CLASS_COUNT)
            .filter(|&t| t != class)
            .map(|t| self.counts[t][class])
            .sum();
        let fn_: u64 = (0..CLASS_COUNT)
            .filter(|&p| p != class)
            .map(|p| self.counts[class][p])
            .sum();
        let tn = self.total() - tp - fp - fn_;
        (tp, fp, fn_, tn)
    }
}

/// The five threshold metrics for one binary reduction. A zero denominator
/// defines the metric as 0 and sets `degenerate`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub accuracy: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub precision: f64,
    pub f1: f64,
    pub degenerate: bool,
}

fn safe_div(num: f64, den: f64, degenerate: &mut bool) -> f64 {
    if den == 0.0 {
        *degenerate = true;
        0.0
    } else {
        num / den
    }
}

pub fn binary_metrics(tp: u64, fp: u64, fn_: u64, tn: u64) -> ClassMetrics {
    let (tp, fp, fn_, tn) = (tp as f64, fp as f64, fn_ as f64, tn as f64);
    let mut degenerate = false;
    let accuracy = safe_div(tp + tn, tp + fp + fn_ + tn, &mut degenerate);
    let sensitivity = safe_div(tp, tp + fn_, &mut degenerate);
    let specificity = safe_div(tn, tn + fp, &mut degenerate);
    let precision = safe_div(tp, tp + fp, &mut degenerate);
    let f1 = safe_div(
        2.0 * precision * sensitivity,
        precision + sensitivity,
        &mut degenerate,
    );
    ClassMetrics {
        accuracy,
        sensitivity,
        specificity,
        precision,
        f1,
        degenerate,
    }
}

/// Threshold metrics per class plus their unweighted macro averages and the
/// plain multiclass accuracy (trace over total), reported separately since
/// the one-vs-rest accuracy is a different quantity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_class: Vec<ClassMetrics>,
    pub macro_accuracy: f64,
    pub macro_sensitivity: f64,
    pub macro_specificity: f64,
    pub macro_precision: f64,
    pub macro_f1: f64,
    pub multiclass_accuracy: f64,
}

pub fn basic_metrics(cm: &ConfusionMatrix) -> Result<MetricsReport> {
    let total = cm.total();
    if total == 0 {
        return Err(CoreError::Contract("metrics need a non-empty confusion matrix".into()));
    }
    let per_class: Vec<ClassMetrics> = (0..CLASS_COUNT)
        .map(|c| {
            let (tp, fp, fn_, tn) = cm.ovr(c);
            binary_metrics(tp, fp, fn_, tn)
        })
        .collect();
    let mean = |f: fn(&ClassMetrics) -> f64| {
        per_class.iter().map(f).sum::<f64>() / CLASS_COUNT as f64
    };
    let trace: u64 = (0..CLASS_COUNT).map(|i| cm.counts[i][i]).sum();
    Ok(MetricsReport {
        macro_accuracy: mean(|m| m.accuracy),
        macro_sensitivity: mean(|m| m.sensitivity),
        macro_specificity: mean(|m| m.specificity),
        macro_precision: mean(|m| m.precision),
        macro_f1: mean(|m| m.f1),
        multiclass_accuracy: trace as f64 / total as f64,
        per_class,
    })
}

/// One point on an ROC curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// `None` when the class is absent from the truth (or has no negatives),
    /// in which case the AUC is undefined and excluded from the macro.
    pub auc: Option<f64>,
    pub points: Vec<RocPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocReport {
    pub per_class: Vec<RocCurve>,
    /// Mean over classes with a defined AUC.
    pub macro_auc: Option<f64>,
    /// Classes excluded from the macro for lack of positives or negatives.
    pub undefined_classes: Vec<usize>,
}

/// Binary ROC by threshold sweep over the distinct scores, descending. Ties
/// are grouped so equal scores move the curve diagonally in one step.
fn roc_binary(scores: &[f64], positives: &[bool]) -> RocCurve {
    let pos = positives.iter().filter(|p| **p).count();
    let neg = positives.len() - pos;
    if pos == 0 || neg == 0 {
        return RocCurve { auc: None, points: Vec::new() };
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());

    let mut points = vec![RocPoint { fpr: 0.0, tpr: 0.0 }];
    let mut tp = 0u64;
    let mut fp = 0u64;
    let mut i = 0;
    while i < order.len() {
        let score = scores[order[i]];
        while i < order.len() && scores[order[i]] == score {
            if positives[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
        });
    }

    let mut auc = 0.0;
    for w in points.windows(2) {
        auc += (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0;
    }
    RocCurve { auc: Some(auc), points }
}

/// One-vs-rest ROC/AUC: `scores[i][c]` is row i's score for class c.
pub fn roc_auc_ovr(truth: &[DistanceLabel], scores: &[Vec<f64>]) -> Result<RocReport> {
    if truth.len() != scores.len() {
        return Err(CoreError::Contract("roc length mismatch".into()));
    }
    if scores.iter().any(|s| s.len() != CLASS_COUNT) {
        return Err(CoreError::Contract("roc scores must have one entry per class".into()));
    }
    if scores.iter().flatten().any(|s| !s.is_finite()) {
        return Err(CoreError::Numeric("non-finite score".into()));
    }

    let mut per_class = Vec::with_capacity(CLASS_COUNT);
    let mut undefined = Vec::new();
    for c in 0..CLASS_COUNT {
        let class_scores: Vec<f64> = scores.iter().map(|s| s[c]).collect();
        let positives: Vec<bool> = truth.iter().map(|t| t.index() == c).collect();
        let curve = roc_binary(&class_scores, &positives);
        if curve.auc.is_none() {
            undefined.push(c);
        }
        per_class.push(curve);
    }
    let defined: Vec<f64> = per_class.iter().filter_map(|c| c.auc).collect();
    let macro_auc = if defined.is_empty() {
        None
    } else {
        Some(defined.iter().sum::<f64>() / defined.len() as f64)
    };
    Ok(RocReport {
        per_class,
        macro_auc,
        undefined_classes: undefined,
    })
}
