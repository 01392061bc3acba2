//! Level-wise exact tree growing over presorted columns.
//!
//! Each depth level costs one pass over the presorted order of every feature
//! that some frontier node sampled, independent of how many nodes the level
//! holds. Split search visits candidate thresholds (midpoints of consecutive
//! distinct values within a node) in ascending feature then ascending
//! threshold order, and only a strictly better gain replaces the incumbent.

use alloc::borrow::Cow;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index;

use crate::linalg::Matrix;
use crate::rng::Rng;

pub(crate) const NONE: u32 = u32::MAX;

/// Additive per-node statistics that define an impurity.
pub(crate) trait SplitStats: Copy + Default {
    fn merge(&mut self, other: &Self);
    fn minus(&self, other: &Self) -> Self;
    /// Impurity times node weight.
    fn impurity_mass(&self) -> f64;
    /// Number of (possibly repeated) samples, for leaf-size limits.
    fn count(&self) -> f64;
    fn is_pure(&self) -> bool;
}

/// Per-feature row order by ascending value, stable on ties.
pub(crate) struct SortedColumns {
    order: Vec<Vec<u32>>,
}

impl SortedColumns {
    pub(crate) fn new(x: &Matrix) -> Self {
        let order = (0..x.cols())
            .map(|f| {
                let mut idx: Vec<u32> = (0..x.rows() as u32).collect();
                idx.sort_by(|&a, &b| x.get(a as usize, f).total_cmp(&x.get(b as usize, f)));
                idx
            })
            .collect();
        Self { order }
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct GrowParams {
    pub max_depth: usize,
    pub min_samples_leaf: f64,
    /// Features sampled per node (clamped to `1..=d`).
    pub max_features: usize,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct GrownNode<S> {
    pub feature: u32,
    pub threshold: f64,
    pub left: u32,
    pub right: u32,
    pub stats: S,
    /// Impurity-mass decrease of this split (0 for leaves).
    pub gain: f64,
}

impl<S> GrownNode<S> {
    pub fn is_leaf(&self) -> bool {
        self.left == NONE
    }
}

pub(crate) struct Grown<S> {
    pub nodes: Vec<GrownNode<S>>,
    /// Final node of each row (`NONE` for rows with zero count).
    pub node_of: Vec<u32>,
}

#[derive(Clone, Copy)]
struct Best<S> {
    gain: f64,
    feature: u32,
    threshold: f64,
    left: S,
}

#[derive(Clone, Copy)]
struct Scan<S> {
    left: S,
    last: f64,
    seen: bool,
}

fn leaf<S>(stats: S) -> GrownNode<S> {
    GrownNode { feature: NONE, threshold: 0.0, left: NONE, right: NONE, stats, gain: 0.0 }
}

/// Grows one tree. `samples[i]` holds row `i`'s statistics; rows whose
/// count is zero (e.g. not drawn by the bootstrap) are ignored.
pub(crate) fn grow<S: SplitStats>(
    x: &Matrix,
    sorted: &SortedColumns,
    samples: &[S],
    params: &GrowParams,
    rng: &mut Rng,
) -> Grown<S> {
    let d = x.cols();
    let mtry = params.max_features.clamp(1, d.max(1));
    let mut node_of: Vec<u32> = samples.iter().map(|s| if s.count() > 0.0 { 0 } else { NONE }).collect();
    let mut root = S::default();
    for s in samples.iter().filter(|s| s.count() > 0.0) {
        root.merge(s);
    }
    let mut nodes = vec![leaf(root)];
    if d == 0 {
        return Grown { nodes, node_of };
    }
    let mut frontier: Vec<u32> = vec![0];
    let mut order: Vec<Cow<'_, [u32]>> = sorted.order.iter().map(|o| Cow::Borrowed(o.as_slice())).collect();
    let mut slot_of: Vec<u32> = vec![NONE];

    let mut depth = 0;
    while !frontier.is_empty() && depth < params.max_depth {
        let mut feature_slots: Vec<Vec<u32>> = vec![Vec::new(); d];
        let mut slots: Vec<u32> = Vec::new();
        for &nd in &frontier {
            let st = nodes[nd as usize].stats;
            if st.is_pure() || st.count() < 2.0 * params.min_samples_leaf.max(1.0) {
                continue;
            }
            let slot = slots.len() as u32;
            slots.push(nd);
            slot_of[nd as usize] = slot;
            let mut feats = index::sample(rng, d, mtry).into_vec();
            feats.sort_unstable();
            for f in feats {
                feature_slots[f].push(slot);
            }
        }
        if slots.is_empty() {
            break;
        }

        let mut best: Vec<Option<Best<S>>> = vec![None; slots.len()];
        let mut wants = vec![false; slots.len()];
        let mut scan: Vec<Scan<S>> = vec![Scan { left: S::default(), last: 0.0, seen: false }; slots.len()];
        for f in 0..d {
            if feature_slots[f].is_empty() {
                continue;
            }
            for &s in &feature_slots[f] {
                wants[s as usize] = true;
                scan[s as usize] = Scan { left: S::default(), last: 0.0, seen: false };
            }
            for &row in order[f].iter() {
                let nd = node_of[row as usize];
                if nd == NONE {
                    continue;
                }
                let slot = slot_of[nd as usize];
                if slot == NONE || !wants[slot as usize] {
                    continue;
                }
                let v = x.get(row as usize, f);
                let st = &mut scan[slot as usize];
                if st.seen && v > st.last {
                    let parent = nodes[nd as usize].stats;
                    let right = parent.minus(&st.left);
                    if st.left.count() >= params.min_samples_leaf && right.count() >= params.min_samples_leaf {
                        let gain = parent.impurity_mass() - st.left.impurity_mass() - right.impurity_mass();
                        let incumbent = best[slot as usize].map_or(0.0, |b| b.gain);
                        if gain > incumbent && gain > 1e-12 * parent.impurity_mass() {
                            let mut thr = st.last + (v - st.last) / 2.0;
                            if thr >= v {
                                thr = st.last;
                            }
                            best[slot as usize] = Some(Best { gain, feature: f as u32, threshold: thr, left: st.left });
                        }
                    }
                }
                st.left.merge(&samples[row as usize]);
                st.last = v;
                st.seen = true;
            }
            for &s in &feature_slots[f] {
                wants[s as usize] = false;
            }
        }

        let mut next = Vec::new();
        for (slot, &nd) in slots.iter().enumerate() {
            slot_of[nd as usize] = NONE;
            if let Some(b) = best[slot] {
                let parent = nodes[nd as usize].stats;
                let l = nodes.len() as u32;
                nodes.push(leaf(b.left));
                nodes.push(leaf(parent.minus(&b.left)));
                slot_of.push(NONE);
                slot_of.push(NONE);
                let n = &mut nodes[nd as usize];
                n.feature = b.feature;
                n.threshold = b.threshold;
                n.left = l;
                n.right = l + 1;
                n.gain = b.gain;
                next.push(l);
                next.push(l + 1);
            }
        }
        let mut active = 0usize;
        for (row, nd) in node_of.iter_mut().enumerate() {
            if *nd == NONE {
                continue;
            }
            let node = &nodes[*nd as usize];
            if !node.is_leaf() {
                *nd = if x.get(row, node.feature as usize) <= node.threshold { node.left } else { node.right };
                active += 1;
            }
        }
        frontier = next;
        depth += 1;

        // Drop rows that settled in leaves once they dominate the scans.
        if !frontier.is_empty() && active * 2 < order[0].len() {
            let is_frontier = {
                let mut m = vec![false; nodes.len()];
                for &n in &frontier {
                    m[n as usize] = true;
                }
                m
            };
            for o in order.iter_mut() {
                let kept: Vec<u32> = o
                    .iter()
                    .copied()
                    .filter(|&r| {
                        let nd = node_of[r as usize];
                        nd != NONE && is_frontier[nd as usize]
                    })
                    .collect();
                *o = Cow::Owned(kept);
            }
        }
    }
    Grown { nodes, node_of }
}

/// Minimal cost-complexity pruning: repeatedly collapses the weakest link
/// while its effective alpha is at most `alpha`. `total_weight` normalizes
/// node risk to `impurity_mass / total_weight`.
pub(crate) fn prune_ccp<S: SplitStats>(nodes: &mut [GrownNode<S>], alpha: f64, total_weight: f64) {
    if alpha <= 0.0 || nodes.is_empty() {
        return;
    }
    loop {
        // (subtree risk, leaf count) bottom-up; children always have larger ids.
        let mut risk = vec![0.0; nodes.len()];
        let mut leaves = vec![0usize; nodes.len()];
        for i in (0..nodes.len()).rev() {
            let n = &nodes[i];
            if n.is_leaf() {
                risk[i] = n.stats.impurity_mass() / total_weight;
                leaves[i] = 1;
            } else {
                risk[i] = risk[n.left as usize] + risk[n.right as usize];
                leaves[i] = leaves[n.left as usize] + leaves[n.right as usize];
            }
        }
        let mut weakest: Option<(f64, usize)> = None;
        let mut reachable = vec![false; nodes.len()];
        reachable[0] = true;
        for i in 0..nodes.len() {
            if !reachable[i] || nodes[i].is_leaf() {
                continue;
            }
            reachable[nodes[i].left as usize] = true;
            reachable[nodes[i].right as usize] = true;
            let own = nodes[i].stats.impurity_mass() / total_weight;
            let g = (own - risk[i]) / (leaves[i] as f64 - 1.0);
            if weakest.is_none_or(|(w, _)| g < w) {
                weakest = Some((g, i));
            }
        }
        match weakest {
            Some((g, i)) if g <= alpha => {
                let n = &mut nodes[i];
                n.left = NONE;
                n.right = NONE;
                n.feature = NONE;
                n.gain = 0.0;
            }
            _ => break,
        }
    }
}

/// Weighted Gini statistics with raw per-class counts.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub(crate) struct ClassStats {
    pub weight: [f64; 2],
    pub counts: [f64; 2],
}

impl SplitStats for ClassStats {
    #[inline]
    fn merge(&mut self, o: &Self) {
        self.weight[0] += o.weight[0];
        self.weight[1] += o.weight[1];
        self.counts[0] += o.counts[0];
        self.counts[1] += o.counts[1];
    }

    #[inline]
    fn minus(&self, o: &Self) -> Self {
        ClassStats {
            weight: [self.weight[0] - o.weight[0], self.weight[1] - o.weight[1]],
            counts: [self.counts[0] - o.counts[0], self.counts[1] - o.counts[1]],
        }
    }

    #[inline]
    fn impurity_mass(&self) -> f64 {
        let w = self.weight[0] + self.weight[1];
        if w <= 0.0 {
            return 0.0;
        }
        w - (self.weight[0] * self.weight[0] + self.weight[1] * self.weight[1]) / w
    }

    #[inline]
    fn count(&self) -> f64 {
        self.counts[0] + self.counts[1]
    }

    #[inline]
    fn is_pure(&self) -> bool {
        self.counts[0] == 0.0 || self.counts[1] == 0.0
    }
}

/// Squared-error statistics.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub(crate) struct RegStats {
    pub sum: f64,
    pub sum_sq: f64,
    pub n: f64,
}

impl SplitStats for RegStats {
    #[inline]
    fn merge(&mut self, o: &Self) {
        self.sum += o.sum;
        self.sum_sq += o.sum_sq;
        self.n += o.n;
    }

    #[inline]
    fn minus(&self, o: &Self) -> Self {
        RegStats { sum: self.sum - o.sum, sum_sq: self.sum_sq - o.sum_sq, n: self.n - o.n }
    }

    #[inline]
    fn impurity_mass(&self) -> f64 {
        if self.n <= 0.0 {
            return 0.0;
        }
        (self.sum_sq - self.sum * self.sum / self.n).max(0.0)
    }

    #[inline]
    fn count(&self) -> f64 {
        self.n
    }

    #[inline]
    fn is_pure(&self) -> bool {
        self.impurity_mass() <= 1e-14 * (1.0 + self.sum_sq)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn class(label: usize) -> ClassStats {
        let mut s = ClassStats::default();
        s.weight[label] = 1.0;
        s.counts[label] = 1.0;
        s
    }

    #[test]
    fn finds_lowest_feature_on_equal_gain() {
        // Two identical features separate the classes equally well.
        let x = Matrix::from_vec(4, 2, vec![0.0, 0.0, 1.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
        let samples = [class(0), class(0), class(1), class(1)];
        let sorted = SortedColumns::new(&x);
        let params = GrowParams { max_depth: 1, min_samples_leaf: 1.0, max_features: 2 };
        let g = grow(&x, &sorted, &samples, &params, &mut crate::rng::stream(0));
        assert_eq!(g.nodes[0].feature, 0);
        assert_eq!(g.nodes[0].threshold, 1.5);
        assert_eq!(g.nodes[1].stats.counts, [2.0, 0.0]);
        assert_eq!(g.nodes[2].stats.counts, [0.0, 2.0]);
    }

    #[test]
    fn respects_depth_and_leaf_counts() {
        let n = 64;
        let data: Vec<f64> = (0..n).map(|i| ((i * 37) % n) as f64).collect();
        let x = Matrix::from_vec(n, 1, data.clone());
        let samples: Vec<ClassStats> = data.iter().map(|&v| class(((v as usize) / 3) % 2)).collect();
        let sorted = SortedColumns::new(&x);
        let params = GrowParams { max_depth: 3, min_samples_leaf: 1.0, max_features: 1 };
        let g = grow(&x, &sorted, &samples, &params, &mut crate::rng::stream(1));
        let leaf_total: f64 = g.nodes.iter().filter(|n| n.is_leaf()).map(|n| n.stats.count()).sum();
        assert_eq!(leaf_total, n as f64);
        // depth check via parent links
        let mut depth = vec![0usize; g.nodes.len()];
        for i in 0..g.nodes.len() {
            if !g.nodes[i].is_leaf() {
                depth[g.nodes[i].left as usize] = depth[i] + 1;
                depth[g.nodes[i].right as usize] = depth[i] + 1;
            }
        }
        assert!(depth.iter().all(|&d| d <= 3));
    }

    #[test]
    fn pruning_with_huge_alpha_leaves_root() {
        let x = Matrix::from_vec(6, 1, vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
        let samples = [class(0), class(1), class(0), class(1), class(0), class(1)];
        let sorted = SortedColumns::new(&x);
        let params = GrowParams { max_depth: 10, min_samples_leaf: 1.0, max_features: 1 };
        let mut g = grow(&x, &sorted, &samples, &params, &mut crate::rng::stream(1));
        assert!(!g.nodes[0].is_leaf());
        prune_ccp(&mut g.nodes, 1e9, 6.0);
        assert!(g.nodes[0].is_leaf());
    }
}
