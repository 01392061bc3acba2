//! Query policies and their cold / warm-up / hot sequencing.
//!
//! Every selector ranks the unlabeled pool by a score (higher = query first)
//! and returns the top of the ranking. Equal scores keep ingestion order.

use alloc::boxed::Box;
use alloc::vec::Vec;

use rand::seq::index;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Matrix;
use crate::math::{binary_entropy, dot, sqrt};
use crate::models::{
    BoostedTrees, BoostingParams, ForestParams, IsolationForest, IsolationParams, LogisticModel, LogisticParams,
    ModelError, NaiveBayes, RandomForest, Scorer,
};
use crate::oracle::Label;
use crate::pool::{EventId, LabelCounts, PoolPair, QuerySet};
use crate::rng::Rng;

mod sequence;

pub use sequence::{sequence_step, PolicyKind, SequenceSpec, SequenceState, Stage, StepContext, REGISTERED_SEQUENCES};

#[derive(Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error("the unlabeled pool is empty")]
    EmptyPool,
    #[error("the labeled pool is empty")]
    EmptyLabeled,
    #[error("a committee needs at least two members, got {0}")]
    CommitteeTooSmall(usize),
    #[error("policy {0} needs a model fitted on the current labeled pool")]
    MissingModel(&'static str),
    #[error("unknown policy or sequence id `{0}`")]
    UnknownId(alloc::string::String),
    #[error("invalid sequence `{0}`: {1}")]
    InvalidSequence(alloc::string::String, &'static str),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Model settings used inside policies.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyParams {
    pub isolation: IsolationParams,
    pub committee_forest: ForestParams,
    pub logistic: LogisticParams,
    pub boosting: BoostingParams,
    /// Count the bias coordinate in the EMC gradient norm.
    pub emc_include_bias: bool,
}

impl Default for PolicyParams {
    fn default() -> Self {
        Self {
            isolation: IsolationParams::default(),
            committee_forest: ForestParams { n_trees: 100, max_depth: 3, ..ForestParams::default() },
            logistic: LogisticParams::default(),
            boosting: BoostingParams::default(),
            emc_include_bias: true,
        }
    }
}

/// Ids and feature matrix of the unlabeled pool, in ingestion order.
pub fn unlabeled_matrix(pool: &PoolPair) -> (Vec<EventId>, Matrix) {
    let ids = pool.unlabeled().map(|e| e.event.event_id).collect();
    let dim = pool.unlabeled().next().map_or(0, |e| e.features.values.len());
    (ids, Matrix::from_rows(pool.unlabeled().map(|e| e.features.values.as_slice()), dim))
}

/// Feature matrix and labels of the labeled pool.
pub fn labeled_matrix(pool: &PoolPair) -> (Matrix, Vec<Label>) {
    let dim = pool.labeled().next().map_or(0, |(e, _)| e.features.values.len());
    let x = Matrix::from_rows(pool.labeled().map(|(e, _)| e.features.values.as_slice()), dim);
    (x, pool.labeled().map(|(_, l)| l).collect())
}

/// Top `k` by descending score; ties keep the earlier position.
pub fn top_k(ids: &[EventId], scores: &[f64], k: usize) -> QuerySet {
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(k);
    QuerySet {
        event_ids: order.iter().map(|&i| ids[i]).collect(),
        scores: order.iter().map(|&i| scores[i]).collect(),
    }
}

fn nonempty(pool: &PoolPair) -> Result<(), PolicyError> {
    if pool.unlabeled_len() == 0 { Err(PolicyError::EmptyPool) } else { Ok(()) }
}

/// Uniform sample without replacement of `min(batch_size, |U|)` events.
pub fn select_random(pool: &PoolPair, batch_size: usize, rng: &mut Rng) -> Result<QuerySet, PolicyError> {
    nonempty(pool)?;
    let n = pool.unlabeled_len();
    let k = batch_size.min(n);
    let mut picks = index::sample(rng, n, k).into_vec();
    picks.sort_unstable();
    let ids: Vec<EventId> = pool.unlabeled().map(|e| e.event.event_id).collect();
    Ok(QuerySet {
        event_ids: picks.iter().map(|&i| ids[i]).collect(),
        scores: alloc::vec![0.0; k],
    })
}

/// Isolation forest fitted on the unlabeled pool; most anomalous first.
pub fn select_outlier_detect(
    pool: &PoolPair,
    batch_size: usize,
    params: &IsolationParams,
    seed: u64,
) -> Result<QuerySet, PolicyError> {
    nonempty(pool)?;
    let (ids, x) = unlabeled_matrix(pool);
    let forest = IsolationForest::fit(&x, params, seed)?;
    Ok(top_k(&ids, &forest.score_rows(&x)?, batch_size))
}

/// Isolation forest fitted on the labeled features (labels unused); the
/// unlabeled events least like the labeled pool come first.
pub fn select_odal(
    pool: &PoolPair,
    batch_size: usize,
    params: &IsolationParams,
    seed: u64,
) -> Result<QuerySet, PolicyError> {
    nonempty(pool)?;
    if pool.labeled_len() == 0 {
        return Err(PolicyError::EmptyLabeled);
    }
    let (lx, _) = labeled_matrix(pool);
    let forest = IsolationForest::fit(&lx, params, seed)?;
    let (ids, x) = unlabeled_matrix(pool);
    Ok(top_k(&ids, &forest.score_rows(&x)?, batch_size))
}

/// Posterior of the unlabeled pool from pool densities and the labeled
/// fraction `p1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DalScore {
    pub p_x_given_0: f64,
    pub p_x_given_1: f64,
    pub p1: f64,
}

impl DalScore {
    pub fn p0(&self) -> f64 {
        1.0 - self.p1
    }

    /// `p(0|x) = (1 + p(x|1) p(1) / (p(x|0) p(0)))^-1`.
    pub fn p0_given_x(&self) -> f64 {
        let num = self.p_x_given_1 * self.p1;
        let den = self.p_x_given_0 * self.p0();
        if num == 0.0 {
            1.0
        } else if den == 0.0 {
            0.0
        } else {
            1.0 / (1.0 + num / den)
        }
    }
}

/// Logistic discriminator of labeled (class 1) versus unlabeled (class 0);
/// highest `p(0|x)` first. With an empty labeled pool every event scores 1.
pub fn select_dal(
    pool: &PoolPair,
    batch_size: usize,
    params: &LogisticParams,
    seed: u64,
) -> Result<QuerySet, PolicyError> {
    nonempty(pool)?;
    let (ids, ux) = unlabeled_matrix(pool);
    if pool.labeled_len() == 0 {
        return Ok(top_k(&ids, &alloc::vec![1.0; ids.len()], batch_size));
    }
    let (lx, _) = labeled_matrix(pool);
    let d = ux.cols();
    let mut data = Vec::with_capacity((lx.rows() + ux.rows()) * d);
    data.extend_from_slice(lx.as_slice());
    data.extend_from_slice(ux.as_slice());
    let x = Matrix::from_vec(lx.rows() + ux.rows(), d, data);
    let mut y = alloc::vec![Label::Positive; lx.rows()];
    y.resize(x.rows(), Label::Negative);
    let model = LogisticModel::fit(&x, &y, params, seed)?;
    let scores: Vec<f64> = model.predict_rows(&ux)?.into_iter().map(|p1| 1.0 - p1).collect();
    Ok(top_k(&ids, &scores, batch_size))
}

/// Highest binary entropy of the forest probability first.
pub fn select_unc_entropy(pool: &PoolPair, model: &RandomForest, batch_size: usize) -> Result<QuerySet, PolicyError> {
    nonempty(pool)?;
    let (ids, x) = unlabeled_matrix(pool);
    let scores: Vec<f64> = model.predict_proba_rows(&x)?.into_iter().map(binary_entropy).collect();
    Ok(top_k(&ids, &scores, batch_size))
}

/// `H(mean p_i) - mean H(p_i)` in bits over per-tree probabilities.
pub fn epistemic_uncertainty(tree_probas: &[f64]) -> f64 {
    let n = tree_probas.len() as f64;
    let mean_p = tree_probas.iter().sum::<f64>() / n;
    let aleatoric = tree_probas.iter().map(|&p| binary_entropy(p)).sum::<f64>() / n;
    binary_entropy(mean_p) - aleatoric
}

pub fn select_unc_epistemic(pool: &PoolPair, model: &RandomForest, batch_size: usize) -> Result<QuerySet, PolicyError> {
    nonempty(pool)?;
    let (ids, x) = unlabeled_matrix(pool);
    let mut scores = Vec::with_capacity(ids.len());
    for r in x.iter_rows() {
        scores.push(epistemic_uncertainty(&model.tree_probas(r)?));
    }
    Ok(top_k(&ids, &scores, batch_size))
}

/// `-|cdf(s_i) - q|` with the empirical cdf `#{s_j <= s_i} / n`, so the
/// events sitting at percentile `q` of the score distribution rank first.
pub fn percentile_scores(scores: &[f64], q: f64) -> Vec<f64> {
    let n = scores.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut cdf = alloc::vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let c = (j + 1) as f64 / n as f64;
        for &o in &order[i..=j] {
            cdf[o] = c;
        }
        i = j + 1;
    }
    cdf.into_iter().map(|c| -(c - q).abs()).collect()
}

/// Events closest to the estimated negative-rate boundary `q = 1 - n_pos/|L|`.
pub fn select_unc_percentile(
    pool: &PoolPair,
    model: &RandomForest,
    counts: LabelCounts,
    batch_size: usize,
) -> Result<QuerySet, PolicyError> {
    nonempty(pool)?;
    if counts.total() == 0 {
        return Err(PolicyError::EmptyLabeled);
    }
    let q = 1.0 - counts.positive as f64 / counts.total() as f64;
    let (ids, x) = unlabeled_matrix(pool);
    let scores = percentile_scores(&model.predict_proba_rows(&x)?, q);
    Ok(top_k(&ids, &scores, batch_size))
}

/// Ordinal ranks, 1 = highest score, ties by position.
pub fn ordinal_ranks(scores: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut ranks = alloc::vec![0.0; scores.len()];
    for (r, &i) in order.iter().enumerate() {
        ranks[i] = (r + 1) as f64;
    }
    ranks
}

/// Mean over member pairs of the absolute rank difference per instance.
pub fn rank_disagreement(member_scores: &[Vec<f64>]) -> Result<Vec<f64>, PolicyError> {
    let m = member_scores.len();
    if m < 2 {
        return Err(PolicyError::CommitteeTooSmall(m));
    }
    let ranks: Vec<Vec<f64>> = member_scores.iter().map(|s| ordinal_ranks(s)).collect();
    let n = ranks[0].len();
    let pairs = (m * (m - 1) / 2) as f64;
    let mut out = alloc::vec![0.0; n];
    for a in 0..m {
        for b in a + 1..m {
            for (o, (ra, rb)) in out.iter_mut().zip(ranks[a].iter().zip(&ranks[b])) {
                *o += (ra - rb).abs();
            }
        }
    }
    out.iter_mut().for_each(|v| *v /= pairs);
    Ok(out)
}

/// Heterogeneous models fitted on the same labeled pool.
pub struct Committee {
    pub members: Vec<Box<dyn Scorer + Send + Sync>>,
}

impl Committee {
    /// Random forest, logistic regression, naive Bayes and boosted trees.
    pub fn fit(x: &Matrix, y: &[Label], params: &PolicyParams, seed: u64) -> Result<Self, PolicyError> {
        let members: Vec<Box<dyn Scorer + Send + Sync>> = alloc::vec![
            Box::new(RandomForest::fit(x, y, &params.committee_forest, seed)?),
            Box::new(LogisticModel::fit(x, y, &params.logistic, seed)?),
            Box::new(NaiveBayes::fit(x, y)?),
            Box::new(BoostedTrees::fit(x, y, &params.boosting, seed)?),
        ];
        Ok(Self { members })
    }
}

pub fn select_qbc(pool: &PoolPair, committee: &Committee, batch_size: usize) -> Result<QuerySet, PolicyError> {
    nonempty(pool)?;
    let (ids, x) = unlabeled_matrix(pool);
    let member_scores = committee.members.iter().map(|m| m.score_rows(&x)).collect::<Result<Vec<_>, _>>()?;
    Ok(top_k(&ids, &rank_disagreement(&member_scores)?, batch_size))
}

/// Expected log-loss gradient norm over `y ~ Bernoulli(p)`: `2 p (1 - p) |x~|`.
pub fn expected_gradient_norm(p: f64, x_norm: f64) -> f64 {
    2.0 * p * (1.0 - p) * x_norm
}

pub fn select_emc(
    pool: &PoolPair,
    model: &LogisticModel,
    batch_size: usize,
    include_bias: bool,
) -> Result<QuerySet, PolicyError> {
    nonempty(pool)?;
    let (ids, x) = unlabeled_matrix(pool);
    let probs = model.predict_rows(&x)?;
    let scores: Vec<f64> = x
        .iter_rows()
        .zip(probs)
        .map(|(r, p)| {
            let sq = dot(r, r) + if include_bias { 1.0 } else { 0.0 };
            expected_gradient_norm(p, sqrt(sq))
        })
        .collect();
    Ok(top_k(&ids, &scores, batch_size))
}

/// Every unlabeled event, in ingestion order.
pub fn select_all(pool: &PoolPair) -> QuerySet {
    let event_ids: Vec<EventId> = pool.unlabeled().map(|e| e.event.event_id).collect();
    let scores = alloc::vec![0.0; event_ids.len()];
    QuerySet { event_ids, scores }
}
