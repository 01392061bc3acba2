//! Random forest of Gini trees with per-tree outputs.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::tree::{self, ClassStats, GrowParams, SortedColumns, NONE};
use super::{check_dim, check_supervised, ModelError, Scorer};
use crate::linalg::Matrix;
use crate::math::{ceil, sqrt};
use crate::oracle::Label;
use crate::rng::{self, tags};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    Sqrt,
    All,
    Fraction(f64),
}

impl MaxFeatures {
    pub fn resolve(self, d: usize) -> usize {
        let k = match self {
            MaxFeatures::Sqrt => sqrt(d as f64) as usize,
            MaxFeatures::All => d,
            MaxFeatures::Fraction(f) => ceil(f * d as f64) as usize,
        };
        k.clamp(1, d.max(1))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub max_features: MaxFeatures,
    pub min_samples_leaf: usize,
    /// Weight classes inversely to their frequency.
    pub balanced_class_weight: bool,
    /// Minimal cost-complexity pruning strength.
    pub ccp_alpha: f64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 200,
            max_depth: 3,
            max_features: MaxFeatures::Sqrt,
            min_samples_leaf: 1,
            balanced_class_weight: false,
            ccp_alpha: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Node {
    feature: u32,
    threshold: f64,
    left: u32,
    right: u32,
    /// Bootstrap counts of (negative, positive) samples reaching the node.
    counts: [u32; 2],
    /// Class-weighted positive fraction.
    proba: f64,
}

#[derive(Clone, Debug, PartialEq)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn from_grown(grown: &[tree::GrownNode<ClassStats>]) -> Self {
        // Re-index reachable nodes so pruned subtrees disappear.
        let mut nodes = Vec::with_capacity(grown.len());
        let mut stack = vec![(0usize, NONE, false)];
        while let Some((g, parent, is_right)) = stack.pop() {
            let gn = &grown[g];
            let id = nodes.len() as u32;
            let w = gn.stats.weight[0] + gn.stats.weight[1];
            nodes.push(Node {
                feature: gn.feature,
                threshold: gn.threshold,
                left: NONE,
                right: NONE,
                counts: [gn.stats.counts[0] as u32, gn.stats.counts[1] as u32],
                proba: if w > 0.0 { gn.stats.weight[1] / w } else { 0.0 },
            });
            if parent != NONE {
                let p = &mut nodes[parent as usize];
                if is_right {
                    p.right = id;
                } else {
                    p.left = id;
                }
            }
            if !gn.is_leaf() {
                stack.push((gn.right as usize, id, true));
                stack.push((gn.left as usize, id, false));
            }
        }
        Tree { nodes }
    }

    #[inline]
    fn leaf(&self, x: &[f64]) -> &Node {
        let mut n = &self.nodes[0];
        while n.left != NONE {
            n = &self.nodes[if x[n.feature as usize] <= n.threshold { n.left } else { n.right } as usize];
        }
        n
    }

    fn depth(&self) -> usize {
        fn d(nodes: &[Node], i: u32) -> usize {
            let n = &nodes[i as usize];
            if n.left == NONE {
                0
            } else {
                1 + d(nodes, n.left).max(d(nodes, n.right))
            }
        }
        d(&self.nodes, 0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RandomForest {
    trees: Vec<Tree>,
    n_features: usize,
    importances: Vec<f64>,
}

impl RandomForest {
    /// Bootstrap-aggregated Gini trees. Tree `t` draws from a stream derived
    /// from `(seed, t)`, so trees could be grown in any order.
    pub fn fit(x: &Matrix, y: &[Label], params: &ForestParams, seed: u64) -> Result<Self, ModelError> {
        check_supervised(x, y)?;
        let n = x.rows();
        let d = x.cols();
        let n_pos = y.iter().filter(|l| l.is_positive()).count();
        let class_weight = if params.balanced_class_weight {
            [n as f64 / (2.0 * (n - n_pos) as f64), n as f64 / (2.0 * n_pos as f64)]
        } else {
            [1.0, 1.0]
        };
        let sorted = SortedColumns::new(x);
        let grow = GrowParams {
            max_depth: params.max_depth,
            min_samples_leaf: params.min_samples_leaf.max(1) as f64,
            max_features: params.max_features.resolve(d),
        };
        let mut importances = vec![0.0; d];
        let mut trees = Vec::with_capacity(params.n_trees);
        let mut multiplicity = vec![0u32; n];
        let mut samples = vec![ClassStats::default(); n];
        for t in 0..params.n_trees.max(1) {
            let mut r = rng::derived_stream(seed, &[tags::TREE, t as u64]);
            multiplicity.iter_mut().for_each(|m| *m = 0);
            for _ in 0..n {
                multiplicity[r.random_range(0..n)] += 1;
            }
            for i in 0..n {
                let c = y[i] as usize;
                let m = multiplicity[i] as f64;
                let mut s = ClassStats::default();
                s.counts[c] = m;
                s.weight[c] = m * class_weight[c];
                samples[i] = s;
            }
            let mut grown = tree::grow(x, &sorted, &samples, &grow, &mut r);
            let total_weight = grown.nodes[0].stats.weight[0] + grown.nodes[0].stats.weight[1];
            tree::prune_ccp(&mut grown.nodes, params.ccp_alpha, total_weight);
            let tree = Tree::from_grown(&grown.nodes);
            accumulate_importance(&grown.nodes, &mut importances);
            trees.push(tree);
        }
        let total: f64 = importances.iter().sum();
        if total > 0.0 {
            importances.iter_mut().for_each(|v| *v /= total);
        }
        Ok(Self { trees, n_features: d, importances })
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn max_depth(&self) -> usize {
        self.trees.iter().map(Tree::depth).max().unwrap_or(0)
    }

    /// Normalized total Gini decrease per feature.
    pub fn feature_importances(&self) -> &[f64] {
        &self.importances
    }

    /// Class-1 probability of each tree's leaf.
    pub fn tree_probas(&self, x: &[f64]) -> Result<Vec<f64>, ModelError> {
        check_dim(self.n_features, x.len())?;
        Ok(self.trees.iter().map(|t| t.leaf(x).proba).collect())
    }

    /// Mean of the per-tree probabilities.
    pub fn predict_proba(&self, x: &[f64]) -> Result<f64, ModelError> {
        check_dim(self.n_features, x.len())?;
        Ok(self.proba_unchecked(x))
    }

    #[inline]
    fn proba_unchecked(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.leaf(x).proba).sum::<f64>() / self.trees.len() as f64
    }

    pub fn predict_proba_rows(&self, x: &Matrix) -> Result<Vec<f64>, ModelError> {
        check_dim(self.n_features, x.cols())?;
        Ok(x.iter_rows().map(|r| self.proba_unchecked(r)).collect())
    }

    /// Leaf (negative, positive) bootstrap counts per tree, for inspection.
    pub fn leaf_counts(&self, x: &[f64]) -> Result<Vec<[u32; 2]>, ModelError> {
        check_dim(self.n_features, x.len())?;
        Ok(self.trees.iter().map(|t| t.leaf(x).counts).collect())
    }
}

impl Scorer for RandomForest {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn score_rows(&self, x: &Matrix) -> Result<Vec<f64>, ModelError> {
        self.predict_proba_rows(x)
    }
}

fn accumulate_importance(nodes: &[tree::GrownNode<ClassStats>], out: &mut [f64]) {
    let mut reachable = vec![false; nodes.len()];
    reachable[0] = true;
    for (i, n) in nodes.iter().enumerate() {
        if reachable[i] && !n.is_leaf() {
            out[n.feature as usize] += n.gain;
            reachable[n.left as usize] = true;
            reachable[n.right as usize] = true;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn two_clusters(n: usize, seed: u64) -> (Matrix, Vec<Label>) {
        let mut r = rng::stream(seed);
        let mut data = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let pos = i % 2 == 1;
            let c = if pos { 5.0 } else { -5.0 };
            for _ in 0..3 {
                let z: f64 = StandardNormal.sample(&mut r);
                data.push(c + z);
            }
            y.push(Label::from(pos));
        }
        (Matrix::from_vec(n, 3, data), y)
    }

    #[test]
    fn separable_clusters_train_perfectly() {
        let (x, y) = two_clusters(200, 1);
        let f = RandomForest::fit(&x, &y, &ForestParams::default(), 3).unwrap();
        assert_eq!(f.n_trees(), 200);
        assert!(f.max_depth() <= 3);
        let p = f.predict_proba_rows(&x).unwrap();
        let correct = p.iter().zip(&y).filter(|(p, y)| (**p > 0.5) == y.is_positive()).count();
        assert_eq!(correct, 200);
    }

    #[test]
    fn deterministic_given_seed() {
        let (x, y) = two_clusters(100, 2);
        let params = ForestParams { n_trees: 20, ..Default::default() };
        let a = RandomForest::fit(&x, &y, &params, 5).unwrap();
        let b = RandomForest::fit(&x, &y, &params, 5).unwrap();
        assert_eq!(a.predict_proba_rows(&x).unwrap(), b.predict_proba_rows(&x).unwrap());
    }

    #[test]
    fn single_class_rejected() {
        let (x, _) = two_clusters(10, 0);
        let y = vec![Label::Negative; 10];
        assert_eq!(RandomForest::fit(&x, &y, &ForestParams::default(), 0), Err(ModelError::SingleClass));
    }

    #[test]
    fn mean_of_tree_probas_is_forest_proba() {
        let (x, mut y) = two_clusters(120, 4);
        // add label noise so leaves are impure
        for i in (0..120).step_by(7) {
            y[i] = Label::from(!y[i].is_positive());
        }
        let params = ForestParams { n_trees: 37, max_depth: 2, ..Default::default() };
        let f = RandomForest::fit(&x, &y, &params, 8).unwrap();
        for r in x.iter_rows() {
            let per_tree = f.tree_probas(r).unwrap();
            assert_eq!(per_tree.len(), 37);
            assert!(per_tree.iter().all(|p| (0.0..=1.0).contains(p)));
            let mean = per_tree.iter().sum::<f64>() / 37.0;
            assert!((mean - f.predict_proba(r).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn one_tree_forest_singleton() {
        let (x, y) = two_clusters(50, 6);
        let params = ForestParams { n_trees: 1, ..Default::default() };
        let f = RandomForest::fit(&x, &y, &params, 1).unwrap();
        let r = x.row(0);
        assert_eq!(f.tree_probas(r).unwrap(), vec![f.predict_proba(r).unwrap()]);
    }

    #[test]
    fn pure_leaf_forest_outputs_zero_or_one() {
        let (x, y) = two_clusters(60, 7);
        let params = ForestParams { n_trees: 15, max_depth: 10, ..Default::default() };
        let f = RandomForest::fit(&x, &y, &params, 2).unwrap();
        for r in x.iter_rows() {
            assert!(f.tree_probas(r).unwrap().iter().all(|&p| p == 0.0 || p == 1.0));
        }
    }

    #[test]
    fn leaf_counts_sum_to_bootstrap_draws() {
        let (x, y) = two_clusters(80, 9);
        let params = ForestParams { n_trees: 5, max_depth: 3, ..Default::default() };
        let f = RandomForest::fit(&x, &y, &params, 4).unwrap();
        for t in &f.trees {
            let leaves: u32 = t.nodes.iter().filter(|n| n.left == NONE).map(|n| n.counts[0] + n.counts[1]).sum();
            assert_eq!(leaves, 80);
            for n in t.nodes.iter().filter(|n| n.left != NONE) {
                let (l, r) = (&t.nodes[n.left as usize], &t.nodes[n.right as usize]);
                assert_eq!(n.counts[0], l.counts[0] + r.counts[0]);
                assert_eq!(n.counts[1], l.counts[1] + r.counts[1]);
            }
        }
    }

    #[test]
    fn dimension_mismatch() {
        let (x, y) = two_clusters(20, 1);
        let f = RandomForest::fit(&x, &y, &ForestParams { n_trees: 2, ..Default::default() }, 0).unwrap();
        assert_eq!(f.predict_proba(&[0.0]), Err(ModelError::DimensionMismatch { expected: 3, got: 1 }));
    }
}
