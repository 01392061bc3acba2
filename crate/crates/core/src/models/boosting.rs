//! Gradient-boosted regression trees on the log-odds with shrinkage.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::tree::{self, GrowParams, RegStats, SortedColumns, NONE};
use super::{check_dim, check_supervised, ModelError, Scorer};
use crate::linalg::Matrix;
use crate::math::{ln, sigmoid, softplus};
use crate::oracle::Label;
use crate::rng::{self, tags};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoostingParams {
    pub n_estimators: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
}

impl Default for BoostingParams {
    fn default() -> Self {
        Self { n_estimators: 100, learning_rate: 0.1, max_depth: 3, min_samples_leaf: 1 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct RNode {
    feature: u32,
    threshold: f64,
    left: u32,
    right: u32,
    value: f64,
}

#[derive(Clone, Debug, PartialEq)]
struct RTree {
    nodes: Vec<RNode>,
}

impl RTree {
    #[inline]
    fn eval(&self, x: &[f64]) -> f64 {
        let mut n = &self.nodes[0];
        while n.left != NONE {
            n = &self.nodes[if x[n.feature as usize] <= n.threshold { n.left } else { n.right } as usize];
        }
        n.value
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoostedTrees {
    init: f64,
    learning_rate: f64,
    trees: Vec<RTree>,
    n_features: usize,
    /// Mean training log loss before any stage and after each stage.
    pub staged_loss: Vec<f64>,
}

fn mean_log_loss(f: &[f64], y: &[Label]) -> f64 {
    f.iter().zip(y).map(|(z, l)| softplus(*z) - l.as_f64() * z).sum::<f64>() / f.len() as f64
}

impl BoostedTrees {
    /// Starts from the prior log-odds; each stage fits a regression tree to
    /// the residuals `y - p` and sets leaf values by one Newton step.
    pub fn fit(x: &Matrix, y: &[Label], params: &BoostingParams, seed: u64) -> Result<Self, ModelError> {
        check_supervised(x, y)?;
        let n = x.rows();
        let pos = y.iter().filter(|l| l.is_positive()).count() as f64;
        let prior = pos / n as f64;
        let init = ln(prior / (1.0 - prior));
        let mut f = vec![init; n];
        let sorted = SortedColumns::new(x);
        let grow = GrowParams {
            max_depth: params.max_depth,
            min_samples_leaf: params.min_samples_leaf.max(1) as f64,
            max_features: x.cols(),
        };
        let mut r = rng::derived_stream(seed, &[tags::TREE]);
        let mut trees = Vec::with_capacity(params.n_estimators);
        let mut staged_loss = vec![mean_log_loss(&f, y)];
        let mut samples = vec![RegStats::default(); n];
        for _ in 0..params.n_estimators {
            let p: Vec<f64> = f.iter().map(|z| sigmoid(*z)).collect();
            for i in 0..n {
                let res = y[i].as_f64() - p[i];
                samples[i] = RegStats { sum: res, sum_sq: res * res, n: 1.0 };
            }
            let grown = tree::grow(x, &sorted, &samples, &grow, &mut r);
            let mut num = vec![0.0; grown.nodes.len()];
            let mut den = vec![0.0; grown.nodes.len()];
            for i in 0..n {
                let leaf = grown.node_of[i] as usize;
                num[leaf] += samples[i].sum;
                den[leaf] += p[i] * (1.0 - p[i]);
            }
            let nodes: Vec<RNode> = grown
                .nodes
                .iter()
                .enumerate()
                .map(|(i, g)| RNode {
                    feature: g.feature,
                    threshold: g.threshold,
                    left: g.left,
                    right: g.right,
                    value: if g.is_leaf() && den[i] > 1e-150 { num[i] / den[i] } else { 0.0 },
                })
                .collect();
            let t = RTree { nodes };
            for (i, fi) in f.iter_mut().enumerate() {
                *fi += params.learning_rate * t.eval(x.row(i));
            }
            staged_loss.push(mean_log_loss(&f, y));
            trees.push(t);
        }
        Ok(Self { init, learning_rate: params.learning_rate, trees, n_features: x.cols(), staged_loss })
    }

    pub fn initial_log_odds(&self) -> f64 {
        self.init
    }

    pub fn decision(&self, x: &[f64]) -> Result<f64, ModelError> {
        check_dim(self.n_features, x.len())?;
        Ok(self.decision_unchecked(x))
    }

    #[inline]
    fn decision_unchecked(&self, x: &[f64]) -> f64 {
        self.init + self.learning_rate * self.trees.iter().map(|t| t.eval(x)).sum::<f64>()
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64, ModelError> {
        Ok(sigmoid(self.decision(x)?))
    }
}

impl Scorer for BoostedTrees {
    fn n_features(&self) -> usize {
        self.n_features
    }

    /// Raw log-odds; rank-based consumers do not need probabilities.
    fn score_rows(&self, x: &Matrix) -> Result<Vec<f64>, ModelError> {
        check_dim(self.n_features, x.cols())?;
        Ok(x.iter_rows().map(|r| self.decision_unchecked(r)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn noisy(n: usize) -> (Matrix, Vec<Label>) {
        let mut r = rng::stream(11);
        let mut data = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let a: f64 = StandardNormal.sample(&mut r);
            let b: f64 = StandardNormal.sample(&mut r);
            data.extend_from_slice(&[a, b]);
            let logit = 1.5 * a - b + if i % 5 == 0 { 2.0 } else { 0.0 };
            y.push(Label::from(logit > 0.3));
        }
        (Matrix::from_vec(n, 2, data), y)
    }

    #[test]
    fn zero_estimators_predict_prior() {
        let (x, y) = noisy(50);
        let params = BoostingParams { n_estimators: 0, ..Default::default() };
        let m = BoostedTrees::fit(&x, &y, &params, 0).unwrap();
        let prior = y.iter().filter(|l| l.is_positive()).count() as f64 / 50.0;
        let lo = (prior / (1.0 - prior)).ln();
        for r in x.iter_rows() {
            assert!((m.decision(r).unwrap() - lo).abs() < 1e-12);
        }
    }

    #[test]
    fn staged_loss_never_increases() {
        let (x, y) = noisy(300);
        let m = BoostedTrees::fit(&x, &y, &BoostingParams::default(), 1).unwrap();
        assert_eq!(m.staged_loss.len(), 101);
        for w in m.staged_loss.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{} -> {}", w[0], w[1]);
        }
        assert!(m.staged_loss[100] < m.staged_loss[0]);
    }

    #[test]
    fn deterministic() {
        let (x, y) = noisy(100);
        let a = BoostedTrees::fit(&x, &y, &BoostingParams::default(), 4).unwrap();
        let b = BoostedTrees::fit(&x, &y, &BoostingParams::default(), 4).unwrap();
        assert_eq!(a.score_rows(&x).unwrap(), b.score_rows(&x).unwrap());
    }
}
