//! Gradient-boosted regression trees with squared-error loss.
//!
//! Trees are grown by exact greedy search over raw feature values (no
//! histogram binning; the data here is desk-scale). Two growth strategies
//! are supported: level-wise growth bounded by depth, and leaf-wise growth
//! that repeatedly splits the leaf with the globally largest gain until a
//! leaf budget is exhausted. Ties between equal-gain splits resolve to the
//! lowest feature index, then the lowest threshold, so training is
//! deterministic regardless of evaluation order.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::data::FeatureVector;
use crate::error::Error;
use crate::Result;

/// Tree growth strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GrowthStrategy {
    /// Depth-limited growth: every node with a positive-gain split is
    /// expanded until `max_depth`.
    LevelWise,
    /// Leaf-count-limited growth: the leaf with the largest gain anywhere
    /// in the tree is expanded next, until `max_leaves`.
    LeafWise,
}

/// Boosting hyper-parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostConfig {
    pub growth: GrowthStrategy,
    pub learning_rate: f64,
    pub n_trees: usize,
    /// Depth bound, level-wise growth only.
    pub max_depth: usize,
    /// Leaf bound, leaf-wise growth only.
    pub max_leaves: usize,
    pub l2_leaf_penalty: f64,
    pub min_samples_leaf: usize,
}

impl BoostConfig {
    /// Level-wise defaults: lr 0.1, 100 trees, depth 10, L2 penalty 1.
    pub fn level_wise() -> Self {
        BoostConfig {
            growth: GrowthStrategy::LevelWise,
            learning_rate: 0.1,
            n_trees: 100,
            max_depth: 10,
            max_leaves: 100,
            l2_leaf_penalty: 1.0,
            min_samples_leaf: 1,
        }
    }

    /// Leaf-wise defaults: lr 0.1, 100 trees, 100 leaves, L2 penalty 1.
    pub fn leaf_wise() -> Self {
        BoostConfig {
            growth: GrowthStrategy::LeafWise,
            ..Self::level_wise()
        }
    }
}

/// One node of a binary regression tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

/// A binary regression tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<TreeNode>,
}

impl RegressionTree {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let mut node = 0usize;
        loop {
            match &self.nodes[node] {
                TreeNode::Leaf { value } => return *value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if x[*feature] < *threshold { *left } else { *right };
                }
            }
        }
    }

    /// Longest root-to-leaf path, in edges. A lone leaf has depth 0.
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], i: usize) -> usize {
            match &nodes[i] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => {
                    1 + walk(nodes, *left).max(walk(nodes, *right))
                }
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, TreeNode::Leaf { .. }))
            .count()
    }
}

/// A fitted boosting ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsemble {
    pub version: u32,
    pub config: BoostConfig,
    /// Mean of the training targets; predictions start here.
    pub base_score: f64,
    pub feature_width: usize,
    pub trees: Vec<RegressionTree>,
}

impl TreeEnsemble {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ensemble: TreeEnsemble = serde_json::from_str(text)?;
        if ensemble.version != 1 {
            return Err(Error::Schema(format!(
                "unsupported ensemble version {}",
                ensemble.version
            )));
        }
        Ok(ensemble)
    }

    pub fn max_tree_depth(&self) -> usize {
        self.trees.iter().map(RegressionTree::depth).max().unwrap_or(0)
    }

    pub fn max_tree_leaves(&self) -> usize {
        self.trees.iter().map(RegressionTree::n_leaves).max().unwrap_or(0)
    }
}

/// Candidate split of one node, scored by penalized variance reduction.
#[derive(Debug, Clone)]
struct SplitCandidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

struct TrainingData {
    /// Column-major feature values, one Vec per feature.
    columns: Vec<Vec<f64>>,
    n_rows: usize,
}

impl TrainingData {
    fn from_rows(x: &[FeatureVector]) -> Result<Self> {
        let width = x[0].values.len();
        for (i, row) in x.iter().enumerate() {
            if row.values.len() != width {
                return Err(Error::Dimension(format!(
                    "row {i} has width {}, expected {width}",
                    row.values.len()
                )));
            }
        }
        let mut columns = vec![Vec::with_capacity(x.len()); width];
        for row in x {
            for (c, &v) in row.values.iter().enumerate() {
                columns[c].push(v);
            }
        }
        Ok(TrainingData {
            columns,
            n_rows: x.len(),
        })
    }
}

/// Leaf weight minimizing the penalized squared error: sum(residual) / (n + lambda).
#[inline]
fn leaf_value(residual_sum: f64, n: usize, lambda: f64) -> f64 {
    residual_sum / (n as f64 + lambda)
}

/// Node score used for gain: g^2 / (n + lambda).
#[inline]
fn node_score(residual_sum: f64, n: usize, lambda: f64) -> f64 {
    residual_sum * residual_sum / (n as f64 + lambda)
}

/// Exact greedy best split over all features for the samples in `indices`.
/// Thresholds sit at midpoints between adjacent distinct values. Returns
/// None when no split has strictly positive gain (or the node is too small).
fn best_split(
    data: &TrainingData,
    residuals: &[f64],
    indices: &[usize],
    cfg: &BoostConfig,
) -> Option<SplitCandidate> {
    let n = indices.len();
    if n < 2 * cfg.min_samples_leaf || n < 2 {
        return None;
    }
    let total: f64 = indices.iter().map(|&i| residuals[i]).sum();
    let parent = node_score(total, n, cfg.l2_leaf_penalty);

    let mut best: Option<SplitCandidate> = None;
    let mut order: Vec<usize> = Vec::with_capacity(n);
    for feature in 0..data.columns.len() {
        let col = &data.columns[feature];
        order.clear();
        order.extend_from_slice(indices);
        // stable key (value, row) keeps accumulation order deterministic
        order.sort_by(|&a, &b| {
            col[a]
                .partial_cmp(&col[b])
                .unwrap_or(Ordering::Equal)
                .then(a.cmp(&b))
        });
        let mut left_sum = 0.0;
        for pos in 0..n - 1 {
            let i = order[pos];
            left_sum += residuals[i];
            let v = col[i];
            let v_next = col[order[pos + 1]];
            if v_next <= v {
                continue; // can only cut where the value changes
            }
            let n_left = pos + 1;
            let n_right = n - n_left;
            if n_left < cfg.min_samples_leaf || n_right < cfg.min_samples_leaf {
                continue;
            }
            let gain = node_score(left_sum, n_left, cfg.l2_leaf_penalty)
                + node_score(total - left_sum, n_right, cfg.l2_leaf_penalty)
                - parent;
            if gain > 0.0 {
                let threshold = v + (v_next - v) / 2.0;
                // strict > keeps the first (lowest feature, lowest threshold)
                // among exact ties
                let better = match &best {
                    None => true,
                    Some(b) => gain > b.gain,
                };
                if better {
                    best = Some(SplitCandidate {
                        gain,
                        feature,
                        threshold,
                    });
                }
            }
        }
    }
    best
}

fn partition(
    data: &TrainingData,
    indices: &[usize],
    feature: usize,
    threshold: f64,
) -> (Vec<usize>, Vec<usize>) {
    let col = &data.columns[feature];
    let mut left = Vec::new();
    let mut right = Vec::new();
    for &i in indices {
        if col[i] < threshold {
            left.push(i);
        } else {
            right.push(i);
        }
    }
    (left, right)
}

fn fit_tree_level_wise(
    data: &TrainingData,
    residuals: &[f64],
    cfg: &BoostConfig,
) -> RegressionTree {
    let mut nodes = Vec::new();
    // (node slot, samples, depth)
    let mut stack: Vec<(usize, Vec<usize>, usize)> = Vec::new();
    nodes.push(TreeNode::Leaf { value: 0.0 });
    stack.push((0, (0..data.n_rows).collect(), 0));

    while let Some((slot, indices, depth)) = stack.pop() {
        let sum: f64 = indices.iter().map(|&i| residuals[i]).sum();
        let split = if depth < cfg.max_depth {
            best_split(data, residuals, &indices, cfg)
        } else {
            None
        };
        match split {
            Some(s) => {
                let (left_idx, right_idx) = partition(data, &indices, s.feature, s.threshold);
                let left = nodes.len();
                nodes.push(TreeNode::Leaf { value: 0.0 });
                let right = nodes.len();
                nodes.push(TreeNode::Leaf { value: 0.0 });
                nodes[slot] = TreeNode::Split {
                    feature: s.feature,
                    threshold: s.threshold,
                    left,
                    right,
                };
                stack.push((right, right_idx, depth + 1));
                stack.push((left, left_idx, depth + 1));
            }
            None => {
                nodes[slot] = TreeNode::Leaf {
                    value: leaf_value(sum, indices.len(), cfg.l2_leaf_penalty),
                };
            }
        }
    }
    RegressionTree { nodes }
}

/// Heap entry for leaf-wise growth: largest gain first, oldest leaf on ties.
struct QueuedSplit {
    gain: f64,
    leaf_seq: usize,
    slot: usize,
    candidate: SplitCandidate,
    indices: Vec<usize>,
}

impl PartialEq for QueuedSplit {
    fn eq(&self, other: &Self) -> bool {
        self.gain == other.gain && self.leaf_seq == other.leaf_seq
    }
}
impl Eq for QueuedSplit {}
impl PartialOrd for QueuedSplit {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for QueuedSplit {
    fn cmp(&self, other: &Self) -> Ordering {
        self.gain
            .total_cmp(&other.gain)
            .then(other.leaf_seq.cmp(&self.leaf_seq))
    }
}

fn fit_tree_leaf_wise(
    data: &TrainingData,
    residuals: &[f64],
    cfg: &BoostConfig,
) -> RegressionTree {
    let all: Vec<usize> = (0..data.n_rows).collect();
    let root_sum: f64 = all.iter().map(|&i| residuals[i]).sum();
    let mut nodes = vec![TreeNode::Leaf {
        value: leaf_value(root_sum, all.len(), cfg.l2_leaf_penalty),
    }];
    let mut n_leaves = 1usize;
    let mut leaf_seq = 0usize;
    let mut heap = BinaryHeap::new();
    if let Some(c) = best_split(data, residuals, &all, cfg) {
        heap.push(QueuedSplit {
            gain: c.gain,
            leaf_seq,
            slot: 0,
            candidate: c,
            indices: all,
        });
    }

    while n_leaves < cfg.max_leaves {
        let Some(q) = heap.pop() else { break };
        let (left_idx, right_idx) =
            partition(data, &q.indices, q.candidate.feature, q.candidate.threshold);
        let left_sum: f64 = left_idx.iter().map(|&i| residuals[i]).sum();
        let right_sum: f64 = right_idx.iter().map(|&i| residuals[i]).sum();
        let left = nodes.len();
        nodes.push(TreeNode::Leaf {
            value: leaf_value(left_sum, left_idx.len(), cfg.l2_leaf_penalty),
        });
        let right = nodes.len();
        nodes.push(TreeNode::Leaf {
            value: leaf_value(right_sum, right_idx.len(), cfg.l2_leaf_penalty),
        });
        nodes[q.slot] = TreeNode::Split {
            feature: q.candidate.feature,
            threshold: q.candidate.threshold,
            left,
            right,
        };
        n_leaves += 1;
        for (slot, indices) in [(left, left_idx), (right, right_idx)] {
            if let Some(c) = best_split(data, residuals, &indices, cfg) {
                leaf_seq += 1;
                heap.push(QueuedSplit {
                    gain: c.gain,
                    leaf_seq,
                    slot,
                    candidate: c,
                    indices,
                });
            }
        }
    }
    RegressionTree { nodes }
}

/// Fit a boosting ensemble by stagewise residual fitting.
///
/// Round k fits a tree to `y - prediction_{k-1}` and updates predictions by
/// `learning_rate` times the tree output. Exact greedy training uses no
/// randomness; the seed is accepted for interface parity with the other
/// regressors and reserved for subsampling variants.
pub fn fit_gbdt(
    x: &[FeatureVector],
    y: &[f64],
    cfg: &BoostConfig,
    _seed: u64,
) -> Result<TreeEnsemble> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::EmptyData("fit_gbdt needs at least one sample".into()));
    }
    if x.len() != y.len() {
        return Err(Error::Dimension(format!(
            "{} feature rows vs {} targets",
            x.len(),
            y.len()
        )));
    }
    if let Some(bad) = y.iter().find(|v| !v.is_finite()) {
        return Err(Error::Data(format!("target is not finite: {bad}")));
    }
    let data = TrainingData::from_rows(x)?;
    let n = data.n_rows;
    let base_score = y.iter().sum::<f64>() / n as f64;
    let mut predictions = vec![base_score; n];
    let mut residuals = vec![0.0; n];
    let mut trees = Vec::with_capacity(cfg.n_trees);

    for _ in 0..cfg.n_trees {
        for i in 0..n {
            residuals[i] = y[i] - predictions[i];
        }
        let tree = match cfg.growth {
            GrowthStrategy::LevelWise => fit_tree_level_wise(&data, &residuals, cfg),
            GrowthStrategy::LeafWise => fit_tree_leaf_wise(&data, &residuals, cfg),
        };
        for (i, row) in x.iter().enumerate() {
            predictions[i] += cfg.learning_rate * tree.predict_row(&row.values);
        }
        trees.push(tree);
    }

    Ok(TreeEnsemble {
        version: 1,
        config: cfg.clone(),
        base_score,
        feature_width: x[0].values.len(),
        trees,
    })
}

/// Predict rows: `base_score + learning_rate * sum of tree outputs`.
pub fn predict_gbdt(ensemble: &TreeEnsemble, x: &[FeatureVector]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(x.len());
    for row in x {
        if row.values.len() != ensemble.feature_width {
            return Err(Error::Dimension(format!(
                "feature width {} does not match training width {}",
                row.values.len(),
                ensemble.feature_width
            )));
        }
        let tree_sum: f64 = ensemble
            .trees
            .iter()
            .map(|t| t.predict_row(&row.values))
            .sum();
        out.push(ensemble.base_score + ensemble.config.learning_rate * tree_sum);
    }
    Ok(out)
}
