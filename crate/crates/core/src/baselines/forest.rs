//! Random forest: bootstrapped trees, greedy Gini splits over a random
//! feature subset per node, class-histogram leaves, averaged probabilities.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::metrics::CLASS_COUNT;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub trees: usize,
    /// Features drawn per node for the split search.
    pub feature_subset: usize,
    pub min_leaf: usize,
    /// `None` grows until pure.
    pub max_depth: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            trees: 100,
            feature_subset: 5,
            min_leaf: 1,
            max_depth: None,
            bootstrap: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum TreeNode {
    Leaf {
        probs: Vec<f64>,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    fn leaf_probs(&self, row: &[f64]) -> &[f64] {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                TreeNode::Leaf { probs } => return probs,
                TreeNode::Split { feature, threshold, left, right } => {
                    at = if row[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub input_dim: usize,
    pub config: ForestConfig,
    pub trees: Vec<Tree>,
}

impl ForestModel {
    /// Mean of the per-tree leaf histograms; sums to 1 per row.
    pub fn class_probabilities(&self, row: &[f64]) -> Vec<f64> {
        let mut acc = vec![0.0; CLASS_COUNT];
        for tree in &self.trees {
            for (a, p) in acc.iter_mut().zip(tree.leaf_probs(row)) {
                *a += p;
            }
        }
        for a in acc.iter_mut() {
            *a /= self.trees.len() as f64;
        }
        acc
    }
}

fn gini(counts: &[u64; CLASS_COUNT], total: u64) -> f64 {
    let total = total as f64;
    1.0 - counts
        .iter()
        .map(|&c| {
            let p = c as f64 / total;
            p * p
        })
        .sum::<f64>()
}

fn class_counts(labels: &[usize], rows: &[usize]) -> ([u64; CLASS_COUNT], u64) {
    let mut counts = [0u64; CLASS_COUNT];
    for &i in rows {
        counts[labels[i]] += 1;
    }
    (counts, rows.len() as u64)
}

struct SplitChoice {
    feature: usize,
    threshold: f64,
    gain: f64,
}

/// Best Gini split of `rows` on one feature, or `None` when every value is
/// identical or `min_leaf` cannot be honored.
fn best_split_on_feature(
    data: &[Vec<f64>],
    labels: &[usize],
    rows: &[usize],
    feature: usize,
    parent_gini: f64,
    min_leaf: usize,
) -> Option<SplitChoice> {
    let mut order: Vec<usize> = rows.to_vec();
    order.sort_by(|&a, &b| data[a][feature].partial_cmp(&data[b][feature]).unwrap());
    let n = order.len();

    let mut left = [0u64; CLASS_COUNT];
    let (mut right, _) = class_counts(labels, rows);
    let mut best: Option<SplitChoice> = None;

    for i in 1..n {
        let prev = order[i - 1];
        left[labels[prev]] += 1;
        right[labels[prev]] -= 1;
        let (lo, hi) = (data[prev][feature], data[order[i]][feature]);
        if lo == hi {
            continue;
        }
        if i < min_leaf || n - i < min_leaf {
            continue;
        }
        let child_gini = (i as f64 * gini(&left, i as u64)
            + (n - i) as f64 * gini(&right, (n - i) as u64))
            / n as f64;
        let gain = parent_gini - child_gini;
        if gain > best.as_ref().map(|b| b.gain).unwrap_or(0.0) {
            best = Some(SplitChoice {
                feature,
                threshold: (lo + hi) / 2.0,
                gain,
            });
        }
    }
    best
}

fn grow(
    data: &[Vec<f64>],
    labels: &[usize],
    rows: Vec<usize>,
    depth: usize,
    cfg: &ForestConfig,
    rng: &mut ChaCha8Rng,
    nodes: &mut Vec<TreeNode>,
) -> usize {
    let (counts, total) = class_counts(labels, &rows);
    let parent_gini = gini(&counts, total);
    let depth_capped = cfg.max_depth.map(|d| depth >= d).unwrap_or(false);

    let make_leaf = |nodes: &mut Vec<TreeNode>| {
        let probs = counts.iter().map(|&c| c as f64 / total as f64).collect();
        nodes.push(TreeNode::Leaf { probs });
        nodes.len() - 1
    };

    if parent_gini == 0.0 || rows.len() < 2 * cfg.min_leaf.max(1) || depth_capped {
        return make_leaf(nodes);
    }

    // Draw the candidate feature order once; keep extending past the subset
    // size if the drawn features cannot split this node.
    let dim = data[0].len();
    let mut features: Vec<usize> = (0..dim).collect();
    for i in (1..features.len()).rev() {
        features.swap(i, rng.gen_range(0..=i));
    }

    let mut best: Option<SplitChoice> = None;
    for (tried, &feature) in features.iter().enumerate() {
        if let Some(candidate) =
            best_split_on_feature(data, labels, &rows, feature, parent_gini, cfg.min_leaf)
        {
            if candidate.gain > best.as_ref().map(|b| b.gain).unwrap_or(0.0) {
                best = Some(candidate);
            }
        }
        if tried + 1 >= cfg.feature_subset && best.is_some() {
            break;
        }
    }

    let Some(split) = best else {
        return make_leaf(nodes);
    };

    let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
        .into_iter()
        .partition(|&i| data[i][split.feature] <= split.threshold);

    let slot = nodes.len();
    nodes.push(TreeNode::Leaf { probs: Vec::new() }); // placeholder
    let left = grow(data, labels, left_rows, depth + 1, cfg, rng, nodes);
    let right = grow(data, labels, right_rows, depth + 1, cfg, rng, nodes);
    nodes[slot] = TreeNode::Split {
        feature: split.feature,
        threshold: split.threshold,
        left,
        right,
    };
    slot
}

/// Trains the forest. Trees are grown in parallel with per-tree seeds, so
/// the result is independent of thread count.
pub fn train_forest(rows: &[Vec<f64>], labels: &[usize], cfg: &ForestConfig) -> Result<ForestModel> {
    if rows.is_empty() || rows.len() != labels.len() {
        return Err(CoreError::Contract("forest training needs matching rows/labels".into()));
    }
    if labels.iter().any(|&l| l >= CLASS_COUNT) {
        return Err(CoreError::Contract("label out of range".into()));
    }
    if cfg.trees == 0 || cfg.feature_subset == 0 {
        return Err(CoreError::Contract("forest needs trees and a feature subset".into()));
    }
    let distinct: std::collections::BTreeSet<usize> = labels.iter().copied().collect();
    if distinct.len() < 2 {
        return Err(CoreError::Contract("forest training needs at least two classes".into()));
    }

    let n = rows.len();
    let trees: Vec<Tree> = (0..cfg.trees)
        .into_par_iter()
        .map(|tree_idx| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (tree_idx as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
            let sample: Vec<usize> = if cfg.bootstrap {
                (0..n).map(|_| rng.gen_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let mut nodes = Vec::new();
            grow(rows, labels, sample, 0, cfg, &mut rng, &mut nodes);
            Tree { nodes }
        })
        .collect();

    Ok(ForestModel {
        input_dim: rows[0].len(),
        config: cfg.clone(),
        trees,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn threshold_data(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let x: f64 = rng.gen_range(0.0..1.0);
            let noise: f64 = rng.gen_range(-1.0..1.0);
            rows.push(vec![x, noise]);
            labels.push(usize::from(x > 0.33));
        }
        (rows, labels)
    }

    #[test]
    fn learns_single_feature_threshold() {
        let (train_rows, train_labels) = threshold_data(1000, 1);
        let (test_rows, test_labels) = threshold_data(1000, 2);
        let cfg = ForestConfig { trees: 30, seed: 5, ..ForestConfig::default() };
        let model = train_forest(&train_rows, &train_labels, &cfg).unwrap();
        let correct = test_rows
            .iter()
            .zip(&test_labels)
            .filter(|(row, &label)| {
                let probs = model.class_probabilities(row);
                let pred = probs
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .unwrap()
                    .0;
                pred == label
            })
            .count();
        assert!(correct >= 950, "accuracy {correct}/1000");
    }

    #[test]
    fn single_tree_memorizes_distinct_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<Vec<f64>> = (0..60)
            .map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let labels: Vec<usize> = (0..60).map(|i| i % 4).collect();
        let cfg = ForestConfig {
            trees: 1,
            bootstrap: false,
            feature_subset: 2,
            seed: 9,
            ..ForestConfig::default()
        };
        let model = train_forest(&rows, &labels, &cfg).unwrap();
        for (row, &label) in rows.iter().zip(&labels) {
            let probs = model.class_probabilities(row);
            assert_eq!(probs[label], 1.0, "row not memorized");
        }
    }

    #[test]
    fn same_seed_identical_forests() {
        let (rows, labels) = threshold_data(300, 4);
        let cfg = ForestConfig { trees: 10, seed: 42, ..ForestConfig::default() };
        let a = train_forest(&rows, &labels, &cfg).unwrap();
        let b = train_forest(&rows, &labels, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn averaged_probabilities_sum_to_one() {
        let (rows, labels) = threshold_data(200, 6);
        let cfg = ForestConfig { trees: 15, seed: 8, ..ForestConfig::default() };
        let model = train_forest(&rows, &labels, &cfg).unwrap();
        for row in rows.iter().take(50) {
            let sum: f64 = model.class_probabilities(row).iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn one_class_is_rejected() {
        let rows = vec![vec![0.0], vec![1.0]];
        let labels = vec![1, 1];
        assert!(train_forest(&rows, &labels, &ForestConfig::default()).is_err());
    }
}
