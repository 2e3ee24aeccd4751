//! Assembles the ordered 25-feature vector per visit, normalizes to [-1, 1],
//! splits 80:20, undersamples the training portion to balanced labels, and
//! cuts the five rotation folds.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data_model::{Corpus, Gender, RegionGroup};
use crate::error::{CoreError, Result};
use crate::features::FeatureComputation;
use crate::geo::{label_distance, DistanceLabel};

mod pca;
mod stats;

pub use pca::{pca_apply, pca_fit, PcaProjection};
pub use stats::{pearson_matrix, PearsonResult};

pub const FEATURE_COUNT: usize = 25;

/// The fixed feature order. This is the documented contract shared by the
/// CSV exports, the models, and the attribution reports.
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "age",
    "gender",
    "low_income",
    "total_visits",
    "total_diseases",
    "total_chronic",
    "upc",
    "lupc",
    "secoc",
    "coci",
    "cci",
    "physician_density",
    "mfpc",
    "lfpc",
    "region_north",
    "region_central",
    "region_south",
    "region_east",
    "region_island",
    "acc_index",
    "is_surgery",
    "is_emergency",
    "is_severe",
    "is_workday",
    "dir",
];

/// Columns holding free-range numeric values; everything else is a +-1 flag
/// or a 0/1 region indicator that passes through normalization unchanged.
pub const NUMERIC_COLUMNS: [usize; 14] = [0, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 19, 24];

fn pm1(b: bool) -> f64 {
    if b {
        1.0
    } else {
        -1.0
    }
}

/// One visit's encoded feature row, its travel distance, and its label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub visit_id: String,
    pub values: Vec<f64>,
    pub km: f64,
    pub label: DistanceLabel,
}

/// Builds one vector per retained visit in the documented order. Two-valued
/// fields encode as +-1 (male = +1, yes = +1); the region group expands to
/// five 0/1 indicators.
pub fn assemble(
    corpus: &Corpus,
    comp: &FeatureComputation,
    por: &BTreeMap<String, String>,
) -> Result<Vec<FeatureVector>> {
    let by_patient = corpus.visits_by_patient();
    let mut out = Vec::with_capacity(corpus.visits.len());

    for visit in &corpus.visits {
        let missing = |what: &str| {
            CoreError::Contract(format!("visit {}: missing {what}", visit.visit_id))
        };
        let patient = corpus
            .patients
            .get(&visit.patient_id)
            .ok_or_else(|| missing("patient profile"))?;
        let agg = comp
            .patients
            .get(&visit.patient_id)
            .ok_or_else(|| missing("patient aggregates"))?;
        let provider = comp
            .providers
            .get(&visit.provider_id)
            .ok_or_else(|| missing("provider features"))?;
        let por_district = por
            .get(&visit.patient_id)
            .ok_or_else(|| missing("por assignment"))?;
        let patient_visits = by_patient
            .get(visit.patient_id.as_str())
            .ok_or_else(|| missing("visit history"))?;
        let incident = crate::features::incident_flags(visit, patient_visits, &corpus.aux)?;
        let (km, label) = label_distance(visit, por_district, &corpus.providers, &corpus.districts)?;

        let age = crate::features::age_at(patient.birthdate, visit.visit_date) as f64;
        let mut values = Vec::with_capacity(FEATURE_COUNT);
        values.push(age);
        values.push(pm1(patient.gender == Gender::Male));
        values.push(pm1(patient.low_income));
        values.push(agg.total_visits as f64);
        values.push(agg.total_diseases as f64);
        values.push(agg.total_chronic as f64);
        values.push(agg.continuity.upc);
        values.push(agg.continuity.lupc);
        values.push(agg.continuity.secoc);
        values.push(agg.continuity.coci);
        values.push(agg.cci as f64);
        values.push(provider.physician_density);
        values.push(provider.mfpc as f64);
        values.push(provider.lfpc as f64);
        for region in RegionGroup::ALL {
            values.push(if provider.region == region { 1.0 } else { 0.0 });
        }
        values.push(provider.acc_index);
        values.push(pm1(incident.is_surgery));
        values.push(pm1(incident.is_emergency));
        values.push(pm1(incident.is_severe));
        values.push(pm1(incident.is_workday));
        values.push(incident.dir);
        debug_assert_eq!(values.len(), FEATURE_COUNT);

        out.push(FeatureVector {
            visit_id: visit.visit_id.clone(),
            values,
            km,
            label,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnScaling {
    /// Categorical +-1 / indicator column, already in range.
    PassThrough,
    MinMax { min: f64, max: f64 },
    /// Numeric column constant on the training set; maps to 0.
    Constant { value: f64 },
}

/// Train-set min/max scaling of the numeric columns into [-1, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub columns: Vec<ColumnScaling>,
}

/// Fits per-column statistics on the training rows only.
pub fn fit_normalizer(train: &[&FeatureVector]) -> Result<Normalizer> {
    if train.is_empty() {
        return Err(CoreError::Contract("normalizer needs a non-empty train set".into()));
    }
    let mut columns = vec![ColumnScaling::PassThrough; FEATURE_COUNT];
    for &col in NUMERIC_COLUMNS.iter() {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for row in train {
            let v = row.values[col];
            if !v.is_finite() {
                return Err(CoreError::Numeric(format!(
                    "non-finite value in column {}",
                    FEATURE_NAMES[col]
                )));
            }
            min = min.min(v);
            max = max.max(v);
        }
        columns[col] = if min == max {
            ColumnScaling::Constant { value: min }
        } else {
            ColumnScaling::MinMax { min, max }
        };
    }
    Ok(Normalizer { columns })
}

impl Normalizer {
    /// Maps a raw row into [-1, 1]. Values outside the train range clip.
    pub fn apply(&self, values: &[f64]) -> Vec<f64> {
        self.columns
            .iter()
            .zip(values)
            .map(|(scaling, &v)| match *scaling {
                ColumnScaling::PassThrough => v,
                ColumnScaling::Constant { .. } => 0.0,
                ColumnScaling::MinMax { min, max } => {
                    (2.0 * (v - min) / (max - min) - 1.0).clamp(-1.0, 1.0)
                }
            })
            .collect()
    }

    pub fn apply_all(&self, rows: &[FeatureVector]) -> Vec<FeatureVector> {
        rows.iter()
            .map(|r| FeatureVector {
                visit_id: r.visit_id.clone(),
                values: self.apply(&r.values),
                km: r.km,
                label: r.label,
            })
            .collect()
    }

    /// Inverse map for a single normalized value (test support; constant
    /// columns recover the training constant).
    pub fn invert(&self, col: usize, normalized: f64) -> f64 {
        match self.columns[col] {
            ColumnScaling::PassThrough => normalized,
            ColumnScaling::Constant { value } => value,
            ColumnScaling::MinMax { min, max } => (normalized + 1.0) / 2.0 * (max - min) + min,
        }
    }
}

/// Index-level description of the split, the balanced training multiset, and
/// the rotation folds. All indices point into the assembled vector list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub rng_seed: u64,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub balanced_train: Vec<usize>,
    pub folds: Vec<Vec<usize>>,
}

/// 80:20 random split, training-side undersampling to the minimum class
/// count, and round-robin fold assignment. The test side keeps its original
/// label distribution.
pub fn split_and_balance(
    vectors: &[FeatureVector],
    train_fraction: f64,
    fold_count: usize,
    seed: u64,
) -> Result<SplitPlan> {
    if vectors.is_empty() {
        return Err(CoreError::Contract("cannot split an empty dataset".into()));
    }
    if fold_count == 0 {
        return Err(CoreError::Contract("fold count must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..vectors.len()).collect();
    order.shuffle(&mut rng);

    let train_len = (vectors.len() as f64 * train_fraction).round() as usize;
    let train: Vec<usize> = order[..train_len].to_vec();
    let test: Vec<usize> = order[train_len..].to_vec();

    // Group the training rows per class, preserving the shuffled order so the
    // undersample below is random but seed-determined.
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); DistanceLabel::COUNT];
    for &idx in &train {
        per_class[vectors[idx].label.index()].push(idx);
    }
    if let Some(pos) = per_class.iter().position(|c| c.is_empty()) {
        return Err(CoreError::Contract(format!(
            "class {} absent from the training split",
            DistanceLabel::from_index(pos).unwrap().as_str()
        )));
    }
    let min_count = per_class.iter().map(|c| c.len()).min().unwrap();

    let mut balanced: Vec<usize> = Vec::with_capacity(min_count * DistanceLabel::COUNT);
    for class in &per_class {
        balanced.extend_from_slice(&class[..min_count]);
    }
    balanced.shuffle(&mut rng);

    let mut folds: Vec<Vec<usize>> = vec![Vec::new(); fold_count];
    for (i, &idx) in balanced.iter().enumerate() {
        folds[i % fold_count].push(idx);
    }

    Ok(SplitPlan {
        rng_seed: seed,
        train,
        test,
        balanced_train: balanced,
        folds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vector(label: DistanceLabel, x: f64) -> FeatureVector {
        let mut values = vec![0.0; FEATURE_COUNT];
        values[0] = x;
        values[3] = 2.0 * x - 1.0;
        FeatureVector {
            visit_id: format!("v{x}"),
            values,
            km: x,
            label,
        }
    }

    fn class_counts(vectors: &[FeatureVector], indices: &[usize]) -> [usize; 4] {
        let mut counts = [0usize; 4];
        for &i in indices {
            counts[vectors[i].label.index()] += 1;
        }
        counts
    }

    #[test]
    fn normalizer_endpoints_and_clipping() {
        let rows = vec![vector(DistanceLabel::L0, 2.0), vector(DistanceLabel::L0, 10.0)];
        let refs: Vec<&FeatureVector> = rows.iter().collect();
        let norm = fit_normalizer(&refs).unwrap();
        assert_eq!(norm.apply(&rows[0].values)[0], -1.0);
        assert_eq!(norm.apply(&rows[1].values)[0], 1.0);

        let mut outside = vector(DistanceLabel::L1, 50.0);
        outside.values[0] = 50.0;
        assert_eq!(norm.apply(&outside.values)[0], 1.0);
        let mut below = vector(DistanceLabel::L1, 0.0);
        below.values[0] = -3.0;
        assert_eq!(norm.apply(&below.values)[0], -1.0);
    }

    #[test]
    fn constant_column_maps_to_zero() {
        let rows = vec![vector(DistanceLabel::L0, 4.0), vector(DistanceLabel::L0, 4.0)];
        let refs: Vec<&FeatureVector> = rows.iter().collect();
        let norm = fit_normalizer(&refs).unwrap();
        assert_eq!(norm.apply(&rows[0].values)[0], 0.0);
        assert_eq!(norm.invert(0, 0.0), 4.0);
    }

    #[test]
    fn normalize_then_invert_recovers_train_values() {
        let rows: Vec<FeatureVector> = (0..40)
            .map(|i| vector(DistanceLabel::L0, 1.0 + 0.37 * i as f64))
            .collect();
        let refs: Vec<&FeatureVector> = rows.iter().collect();
        let norm = fit_normalizer(&refs).unwrap();
        for row in &rows {
            let scaled = norm.apply(&row.values);
            for &col in NUMERIC_COLUMNS.iter() {
                let back = norm.invert(col, scaled[col]);
                let rel = (back - row.values[col]).abs() / row.values[col].abs().max(1.0);
                assert!(rel < 1e-9, "col {col}: {back} vs {}", row.values[col]);
            }
        }
    }

    #[test]
    fn balanced_counts_equal_minimum() {
        // 100/50/25/60 per class before balancing.
        let mut vectors = Vec::new();
        for (label, count) in [
            (DistanceLabel::L0, 100),
            (DistanceLabel::L1, 50),
            (DistanceLabel::L2, 25),
            (DistanceLabel::L3, 60),
        ] {
            for i in 0..count {
                vectors.push(vector(label, i as f64));
            }
        }
        // train_fraction 1.0 keeps every row on the training side so the
        // class arithmetic stays exact.
        let plan = split_and_balance(&vectors, 1.0, 5, 7).unwrap();
        let counts = class_counts(&vectors, &plan.balanced_train);
        assert_eq!(counts, [25, 25, 25, 25]);
        assert_eq!(plan.balanced_train.len(), 4 * 25);

        let fold_sizes: Vec<usize> = plan.folds.iter().map(|f| f.len()).collect();
        assert_eq!(fold_sizes.iter().sum::<usize>(), 100);
        let max = fold_sizes.iter().max().unwrap();
        let min = fold_sizes.iter().min().unwrap();
        assert!(max - min <= 1);
    }

    #[test]
    fn already_balanced_input_is_kept_whole() {
        let mut vectors = Vec::new();
        for label in DistanceLabel::ALL {
            for i in 0..8 {
                vectors.push(vector(label, i as f64));
            }
        }
        let plan = split_and_balance(&vectors, 1.0, 5, 3).unwrap();
        let mut kept: Vec<usize> = plan.balanced_train.clone();
        kept.sort_unstable();
        let all: Vec<usize> = (0..vectors.len()).collect();
        assert_eq!(kept, all);
    }

    #[test]
    fn same_seed_same_plan() {
        let vectors: Vec<FeatureVector> = (0..200)
            .map(|i| vector(DistanceLabel::from_index(i % 4).unwrap(), i as f64))
            .collect();
        let a = split_and_balance(&vectors, 0.8, 5, 42).unwrap();
        let b = split_and_balance(&vectors, 0.8, 5, 42).unwrap();
        assert_eq!(a, b);
        let c = split_and_balance(&vectors, 0.8, 5, 43).unwrap();
        assert_ne!(a.train, c.train);
    }

    #[test]
    fn split_ratio_within_one_row() {
        let vectors: Vec<FeatureVector> = (0..203)
            .map(|i| vector(DistanceLabel::from_index(i % 4).unwrap(), i as f64))
            .collect();
        let plan = split_and_balance(&vectors, 0.8, 5, 1).unwrap();
        let expected = 203.0 * 0.8;
        assert!((plan.train.len() as f64 - expected).abs() <= 1.0);
        assert_eq!(plan.train.len() + plan.test.len(), 203);
        // Disjointness.
        let mut all: Vec<usize> = plan.train.iter().chain(&plan.test).copied().collect();
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), 203);
    }

    #[test]
    fn folds_partition_balanced_set() {
        let vectors: Vec<FeatureVector> = (0..173)
            .map(|i| vector(DistanceLabel::from_index(i % 4).unwrap(), i as f64))
            .collect();
        let plan = split_and_balance(&vectors, 0.8, 5, 9).unwrap();
        let mut from_folds: Vec<usize> = plan.folds.iter().flatten().copied().collect();
        from_folds.sort_unstable();
        let mut balanced = plan.balanced_train.clone();
        balanced.sort_unstable();
        assert_eq!(from_folds, balanced);
    }

    #[test]
    fn missing_class_is_an_error() {
        let vectors: Vec<FeatureVector> =
            (0..40).map(|i| vector(DistanceLabel::L0, i as f64)).collect();
        assert!(split_and_balance(&vectors, 0.8, 5, 0).is_err());
    }
}
