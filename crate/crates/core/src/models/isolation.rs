//! Isolation forest.

use alloc::vec::Vec;

use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{check_dim, ModelError};
use crate::linalg::Matrix;
use crate::math::{ceil, ln, log2, pow2, EULER_GAMMA};
use crate::rng::{self, tags};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IsolationParams {
    pub n_trees: usize,
    /// Upper bound on the per-tree subsample; the effective size is
    /// `min(max_samples, n)`.
    pub max_samples: usize,
}

impl Default for IsolationParams {
    fn default() -> Self {
        Self { n_trees: 100, max_samples: 256 }
    }
}

/// Average path length of an unsuccessful search in a binary search tree of
/// `n` points: `c(n) = 2 H(n-1) - 2 (n-1) / n` with `H(i) = ln i + gamma`,
/// `c(2) = 1` and `c(n) = 0` for `n <= 1`.
pub fn average_path_length(n: usize) -> f64 {
    match n {
        0 | 1 => 0.0,
        2 => 1.0,
        _ => {
            let m = (n - 1) as f64;
            2.0 * (ln(m) + EULER_GAMMA) - 2.0 * m / n as f64
        }
    }
}

/// `2^(-E[h] / c(n))`.
pub fn score_from_path_length(mean_path: f64, sample_size: usize) -> f64 {
    let c = average_path_length(sample_size);
    if c <= 0.0 {
        return 0.5;
    }
    pow2(-mean_path / c)
}

#[derive(Clone, Debug, PartialEq)]
enum INode {
    Split { feature: u32, value: f64, left: u32, right: u32 },
    Leaf { size: u32 },
}

#[derive(Clone, Debug, PartialEq)]
struct ITree {
    nodes: Vec<INode>,
}

impl ITree {
    fn build(x: &Matrix, rows: &mut [u32], height_limit: usize, rng: &mut rng::Rng) -> Self {
        let mut tree = ITree { nodes: Vec::new() };
        tree.grow(x, rows, 0, height_limit, rng);
        tree
    }

    fn grow(&mut self, x: &Matrix, rows: &mut [u32], depth: usize, limit: usize, rng: &mut rng::Rng) -> u32 {
        let id = self.nodes.len() as u32;
        self.nodes.push(INode::Leaf { size: rows.len() as u32 });
        if depth >= limit || rows.len() <= 1 {
            return id;
        }
        // Only features that vary inside the node can split it.
        let d = x.cols();
        let mut ranges = Vec::with_capacity(d);
        for f in 0..d {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for &r in rows.iter() {
                let v = x.get(r as usize, f);
                lo = lo.min(v);
                hi = hi.max(v);
            }
            if hi > lo {
                ranges.push((f, lo, hi));
            }
        }
        if ranges.is_empty() {
            return id;
        }
        let (feature, lo, hi) = ranges[rng.random_range(0..ranges.len())];
        let mut value = lo + (hi - lo) * rng.random::<f64>();
        if value <= lo || value >= hi {
            value = lo + (hi - lo) / 2.0;
        }
        let mut split = 0;
        for i in 0..rows.len() {
            if x.get(rows[i] as usize, feature) < value {
                rows.swap(i, split);
                split += 1;
            }
        }
        let (l, r) = rows.split_at_mut(split);
        let left = self.grow(x, l, depth + 1, limit, rng);
        let right = self.grow(x, r, depth + 1, limit, rng);
        self.nodes[id as usize] = INode::Split { feature: feature as u32, value, left, right };
        id
    }

    fn path_length(&self, x: &[f64]) -> f64 {
        let mut node = 0usize;
        let mut depth = 0.0;
        loop {
            match self.nodes[node] {
                INode::Split { feature, value, left, right } => {
                    node = if x[feature as usize] < value { left } else { right } as usize;
                    depth += 1.0;
                }
                INode::Leaf { size } => return depth + average_path_length(size as usize),
            }
        }
    }

    fn height(&self) -> usize {
        fn h(nodes: &[INode], i: usize) -> usize {
            match nodes[i] {
                INode::Split { left, right, .. } => 1 + h(nodes, left as usize).max(h(nodes, right as usize)),
                INode::Leaf { .. } => 0,
            }
        }
        h(&self.nodes, 0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IsolationForest {
    trees: Vec<ITree>,
    sample_size: usize,
    n_features: usize,
}

impl IsolationForest {
    /// Fits `n_trees` isolation trees, each on an independent subsample drawn
    /// without replacement.
    pub fn fit(x: &Matrix, params: &IsolationParams, seed: u64) -> Result<Self, ModelError> {
        let n = x.rows();
        if n == 0 {
            return Err(ModelError::EmptyData);
        }
        if !x.all_finite() {
            return Err(ModelError::NonFinite);
        }
        let sample_size = params.max_samples.max(1).min(n);
        let limit = ceil(log2(sample_size.max(2) as f64)) as usize;
        let trees = (0..params.n_trees.max(1))
            .map(|t| {
                let mut r = rng::derived_stream(seed, &[tags::TREE, t as u64]);
                let mut rows: Vec<u32> =
                    index::sample(&mut r, n, sample_size).into_iter().map(|i| i as u32).collect();
                ITree::build(x, &mut rows, limit, &mut r)
            })
            .collect();
        Ok(Self { trees, sample_size, n_features: x.cols() })
    }

    pub fn sample_size(&self) -> usize {
        self.sample_size
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn max_height(&self) -> usize {
        self.trees.iter().map(ITree::height).max().unwrap_or(0)
    }

    /// Mean path length over the trees.
    pub fn path_length(&self, x: &[f64]) -> Result<f64, ModelError> {
        check_dim(self.n_features, x.len())?;
        Ok(self.trees.iter().map(|t| t.path_length(x)).sum::<f64>() / self.trees.len() as f64)
    }

    /// Anomaly score in (0, 1]; higher is more outlier-like.
    pub fn score(&self, x: &[f64]) -> Result<f64, ModelError> {
        Ok(score_from_path_length(self.path_length(x)?, self.sample_size))
    }

    pub fn score_rows(&self, x: &Matrix) -> Result<Vec<f64>, ModelError> {
        check_dim(self.n_features, x.cols())?;
        Ok(x.iter_rows().map(|r| self.score(r).expect("dimension checked")).collect())
    }
}
