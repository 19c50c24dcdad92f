//! Random forest of Gini CART trees.
//!
//! Tree `i` draws all of its randomness from a ChaCha generator seeded with
//! `mix_seed(seed, i)`, so growing trees in parallel gives the same forest as
//! growing them one after another.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_training_set, LearnError};
use crate::features::FeatureVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    /// Features tried per split; `None` means `ceil(sqrt(dimension))`.
    pub mtry: Option<usize>,
    /// Minimum samples on each side of a split.
    pub min_leaf: usize,
    pub seed: u64,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams { n_trees: 100, max_depth: 16, mtry: None, min_leaf: 2, seed: 0, bootstrap: true }
    }
}

impl ForestParams {
    pub fn resolved_mtry(&self, dimension: usize) -> usize {
        self.mtry.unwrap_or_else(|| (dimension as f64).sqrt().ceil() as usize).clamp(1, dimension.max(1))
    }

    fn validate(&self, dimension: usize) -> Result<(), LearnError> {
        if self.n_trees == 0 {
            return Err(LearnError::InvalidParams("n_trees must be at least 1".into()));
        }
        if self.min_leaf == 0 {
            return Err(LearnError::InvalidParams("min_leaf must be at least 1".into()));
        }
        if let Some(m) = self.mtry {
            if m == 0 || m > dimension {
                return Err(LearnError::InvalidParams(format!("mtry {m} outside 1..={dimension}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    /// Samples with `x[feature] <= threshold` go left.
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    /// Class frequencies `(negative, positive)` of the training samples that
    /// reached the leaf.
    Leaf { p_neg: f64, p_pos: f64 },
}

/// Nodes in depth-first order; the root is node 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    fn leaf_proba(&self, x: &FeatureVector) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { p_pos, .. } => return *p_pos,
                Node::Split { feature, threshold, left, right } => {
                    i = if x.get(*feature) <= *threshold { *left } else { *right }
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
            }
        }
        go(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub dimension: usize,
    pub params: ForestParams,
    pub trees: Vec<Tree>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    Parallel,
}

/// SplitMix64 finalizer over the seed and tree index.
pub fn mix_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn fit_forest(x: &[FeatureVector], y: &[bool], params: ForestParams) -> Result<ForestModel, LearnError> {
    fit_forest_with(x, y, params, Execution::Parallel)
}

pub fn fit_forest_with(
    x: &[FeatureVector],
    y: &[bool],
    params: ForestParams,
    execution: Execution,
) -> Result<ForestModel, LearnError> {
    let dimension = check_training_set(x, y)?;
    params.validate(dimension)?;
    let mut columns = vec![vec![0.0; x.len()]; dimension];
    for (s, xi) in x.iter().enumerate() {
        for &(j, v) in xi.entries() {
            columns[j][s] = v;
        }
    }
    let grower = Grower { columns: &columns, y, mtry: params.resolved_mtry(dimension), params: &params };
    let trees = match execution {
        Execution::Parallel => (0..params.n_trees).into_par_iter().map(|i| grower.grow(i)).collect(),
        Execution::Sequential => (0..params.n_trees).map(|i| grower.grow(i)).collect(),
    };
    Ok(ForestModel { dimension, params: ForestParams { mtry: Some(grower.mtry), ..params }, trees })
}

struct Grower<'a> {
    columns: &'a [Vec<f64>],
    y: &'a [bool],
    mtry: usize,
    params: &'a ForestParams,
}

struct Candidate {
    score: f64,
    feature: usize,
    threshold: f64,
}

impl Grower<'_> {
    fn grow(&self, index: usize) -> Tree {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(self.params.seed, index as u64));
        let n = self.y.len();
        let samples: Vec<usize> =
            if self.params.bootstrap { (0..n).map(|_| rng.random_range(0..n)).collect() } else { (0..n).collect() };
        let mut nodes = Vec::new();
        self.build(samples, 0, &mut rng, &mut nodes);
        Tree { nodes }
    }

    fn build(&self, samples: Vec<usize>, depth: usize, rng: &mut ChaCha8Rng, nodes: &mut Vec<Node>) -> usize {
        let id = nodes.len();
        let pos = samples.iter().filter(|&&s| self.y[s]).count();
        let total = samples.len();
        let leaf = Node::Leaf { p_neg: (total - pos) as f64 / total as f64, p_pos: pos as f64 / total as f64 };
        nodes.push(leaf);
        if pos == 0 || pos == total || depth >= self.params.max_depth || total < 2 * self.params.min_leaf {
            return id;
        }
        let Some(best) = self.best_split(&samples, pos, rng) else {
            return id;
        };
        let (left, right): (Vec<usize>, Vec<usize>) =
            samples.into_iter().partition(|&s| self.columns[best.feature][s] <= best.threshold);
        let l = self.build(left, depth + 1, rng, nodes);
        let r = self.build(right, depth + 1, rng, nodes);
        nodes[id] = Node::Split { feature: best.feature, threshold: best.threshold, left: l, right: r };
        id
    }

    /// Visits features in a random order until `mtry` non-constant ones have
    /// been scored. Maximizes `Σ_child (n0² + n1²) / n_child`, which is
    /// equivalent to minimizing weighted Gini impurity. Ties go to the lower
    /// feature index, then the lower threshold.
    fn best_split(&self, samples: &[usize], pos: usize, rng: &mut ChaCha8Rng) -> Option<Candidate> {
        let mut order: Vec<usize> = (0..self.columns.len()).collect();
        order.shuffle(rng);
        let total = samples.len();
        let min_leaf = self.params.min_leaf;
        let mut best: Option<Candidate> = None;
        let mut scored = 0;
        let mut pairs: Vec<(f64, bool)> = Vec::with_capacity(total);
        for feature in order {
            if scored == self.mtry {
                break;
            }
            let col = &self.columns[feature];
            pairs.clear();
            pairs.extend(samples.iter().map(|&s| (col[s], self.y[s])));
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            if pairs[0].0 == pairs[total - 1].0 {
                continue;
            }
            scored += 1;
            let mut left_pos = 0usize;
            for i in 1..total {
                left_pos += usize::from(pairs[i - 1].1);
                if i < min_leaf || total - i < min_leaf || pairs[i - 1].0 == pairs[i].0 {
                    continue;
                }
                let (nl, nr) = (i as f64, (total - i) as f64);
                let (l1, r1) = (left_pos as f64, (pos - left_pos) as f64);
                let (l0, r0) = (nl - l1, nr - r1);
                let score = (l0 * l0 + l1 * l1) / nl + (r0 * r0 + r1 * r1) / nr;
                let (lo, hi) = (pairs[i - 1].0, pairs[i].0);
                let mid = lo + (hi - lo) / 2.0;
                let threshold = if mid < hi { mid } else { lo };
                let better = match &best {
                    None => true,
                    Some(b) => {
                        score > b.score
                            || (score == b.score
                                && (feature < b.feature || (feature == b.feature && threshold < b.threshold)))
                    }
                };
                if better {
                    best = Some(Candidate { score, feature, threshold });
                }
            }
        }
        best
    }
}

impl ForestModel {
    /// Mean positive-class leaf frequency over the trees.
    pub fn predict_proba(&self, x: &FeatureVector) -> Result<f64, LearnError> {
        if x.dimension() != self.dimension {
            return Err(LearnError::DimensionMismatch { expected: self.dimension, got: x.dimension() });
        }
        let sum: f64 = self.trees.iter().map(|t| t.leaf_proba(x)).sum();
        Ok(sum / self.trees.len() as f64)
    }
}
