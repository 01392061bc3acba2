//! Policy sequences: a cold policy for the first batch, an optional warm-up
//! policy until both classes are labeled, then the hot policy.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::*;
use crate::rng::{self, tags};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Random,
    OutlierDetect,
    Odal,
    Dal,
    UncEntropy,
    UncEpistemic,
    UncPercentile,
    Qbc,
    Emc,
    QueryAll,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 10] = [
        Self::Random,
        Self::OutlierDetect,
        Self::Odal,
        Self::Dal,
        Self::UncEntropy,
        Self::UncEpistemic,
        Self::UncPercentile,
        Self::Qbc,
        Self::Emc,
        Self::QueryAll,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Self::Random => "random",
            Self::OutlierDetect => "outlier_detect",
            Self::Odal => "odal",
            Self::Dal => "dal",
            Self::UncEntropy => "unc_entropy",
            Self::UncEpistemic => "unc_epistemic",
            Self::UncPercentile => "unc_percentile",
            Self::Qbc => "qbc",
            Self::Emc => "emc",
            Self::QueryAll => "query_all",
        }
    }

    pub fn from_id(id: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.id() == id)
    }

    /// Needs labels of both classes.
    pub fn is_supervised(self) -> bool {
        matches!(self, Self::UncEntropy | Self::UncEpistemic | Self::UncPercentile | Self::Qbc | Self::Emc)
    }

    /// Consumes the per-iteration random forest.
    pub fn needs_forest(self) -> bool {
        matches!(self, Self::UncEntropy | Self::UncEpistemic | Self::UncPercentile)
    }

    /// Needs at least one labeled event.
    pub fn needs_labeled(self) -> bool {
        matches!(self, Self::Odal) || self.is_supervised()
    }
}

/// The twelve sequences compared in the experiments, QueryAll included.
pub const REGISTERED_SEQUENCES: [&str; 12] = [
    "query_all",
    "random",
    "outlier_detect",
    "random>unc_entropy",
    "random>qbc",
    "random>emc",
    "random>odal",
    "random>odal>unc_entropy",
    "random>odal>unc_epistemic",
    "random>odal>unc_percentile",
    "random>odal>qbc",
    "random>odal>emc",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceSpec {
    pub cold: PolicyKind,
    pub warmup: Option<PolicyKind>,
    pub hot: Option<PolicyKind>,
}

impl SequenceSpec {
    /// Parses `cold`, `cold>hot` or `cold>warmup>hot`.
    pub fn parse(id: &str) -> Result<Self, PolicyError> {
        let parts: Vec<&str> = id.split('>').map(str::trim).collect();
        let mut kinds = Vec::with_capacity(parts.len());
        for p in &parts {
            kinds.push(PolicyKind::from_id(p).ok_or_else(|| PolicyError::UnknownId(String::from(*p)))?);
        }
        let spec = match kinds.as_slice() {
            [c] => Self { cold: *c, warmup: None, hot: None },
            [c, h] => Self { cold: *c, warmup: None, hot: Some(*h) },
            [c, w, h] => Self { cold: *c, warmup: Some(*w), hot: Some(*h) },
            _ => return Err(PolicyError::InvalidSequence(String::from(id), "at most three stages")),
        };
        let bad = |why| Err(PolicyError::InvalidSequence(String::from(id), why));
        if spec.cold.needs_labeled() {
            return bad("the cold policy cannot depend on labels");
        }
        if spec.warmup.is_some_and(PolicyKind::is_supervised) {
            return bad("the warm-up policy cannot need both classes");
        }
        if kinds.len() > 1 && kinds.contains(&PolicyKind::QueryAll) {
            return bad("query_all stands alone");
        }
        Ok(spec)
    }

    pub fn id(&self) -> String {
        match (self.warmup, self.hot) {
            (None, None) => String::from(self.cold.id()),
            (None, Some(h)) => format!("{}>{}", self.cold.id(), h.id()),
            (Some(w), Some(h)) => format!("{}>{}>{}", self.cold.id(), w.id(), h.id()),
            (Some(w), None) => format!("{}>{}", self.cold.id(), w.id()),
        }
    }

    pub fn n_stages(&self) -> usize {
        1 + self.warmup.is_some() as usize + self.hot.is_some() as usize
    }

    pub fn policy(&self, stage: Stage) -> PolicyKind {
        match stage {
            Stage::Cold => self.cold,
            Stage::Warmup => self.warmup.unwrap_or(self.cold),
            Stage::Hot => self.hot.unwrap_or(self.cold),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Cold,
    Warmup,
    Hot,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Cold => "cold",
            Self::Warmup => "warmup",
            Self::Hot => "hot",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SequenceState {
    pub spec: SequenceSpec,
    pub stage: Stage,
    pub first_batch_done: bool,
    pub both_classes_seen: bool,
}

/// Inputs of one selection step besides the pool.
pub struct StepContext<'a> {
    pub batch_size: usize,
    pub seed: u64,
    pub iteration: u64,
    pub params: &'a PolicyParams,
    /// The iteration forest, fitted on the current labeled pool.
    pub forest: Option<&'a RandomForest>,
}

impl SequenceState {
    pub fn new(spec: SequenceSpec) -> Self {
        Self { spec, stage: Stage::Cold, first_batch_done: false, both_classes_seen: false }
    }

    /// Stage the next step will run in, given the current label counts.
    pub fn next_stage(&self, counts: LabelCounts) -> Stage {
        let mut stage = self.stage;
        if stage == Stage::Cold && self.first_batch_done && self.spec.warmup.is_some() {
            stage = Stage::Warmup;
        }
        if (self.both_classes_seen || counts.both_classes()) && self.spec.hot.is_some() {
            stage = Stage::Hot;
        }
        stage
    }

    pub fn next_policy(&self, counts: LabelCounts) -> PolicyKind {
        self.spec.policy(self.next_stage(counts))
    }
}

/// Advances the stage if a switch predicate holds, then queries with the
/// active stage's policy.
pub fn sequence_step(state: &mut SequenceState, pool: &PoolPair, ctx: &StepContext<'_>) -> Result<QuerySet, PolicyError> {
    let counts = pool.label_counts();
    state.stage = state.next_stage(counts);
    state.both_classes_seen |= counts.both_classes();
    let kind = state.spec.policy(state.stage);
    let query = run_policy(kind, pool, ctx)?;
    state.first_batch_done = true;
    Ok(query)
}

fn run_policy(kind: PolicyKind, pool: &PoolPair, ctx: &StepContext<'_>) -> Result<QuerySet, PolicyError> {
    let it = ctx.iteration;
    let forest = || ctx.forest.ok_or(PolicyError::MissingModel(kind.id()));
    match kind {
        PolicyKind::Random => {
            let mut r = rng::derived_stream(ctx.seed, &[tags::COLD_RANDOM, it]);
            select_random(pool, ctx.batch_size, &mut r)
        }
        PolicyKind::OutlierDetect => select_outlier_detect(
            pool,
            ctx.batch_size,
            &ctx.params.isolation,
            rng::derive(ctx.seed, &[tags::OUTLIER_FOREST, it]),
        ),
        PolicyKind::Odal => {
            select_odal(pool, ctx.batch_size, &ctx.params.isolation, rng::derive(ctx.seed, &[tags::ODAL_FOREST, it]))
        }
        PolicyKind::Dal => {
            select_dal(pool, ctx.batch_size, &ctx.params.logistic, rng::derive(ctx.seed, &[tags::DISCRIMINATOR, it]))
        }
        PolicyKind::UncEntropy => select_unc_entropy(pool, forest()?, ctx.batch_size),
        PolicyKind::UncEpistemic => select_unc_epistemic(pool, forest()?, ctx.batch_size),
        PolicyKind::UncPercentile => select_unc_percentile(pool, forest()?, pool.label_counts(), ctx.batch_size),
        PolicyKind::Qbc => {
            let (x, y) = labeled_matrix(pool);
            let committee = Committee::fit(&x, &y, ctx.params, rng::derive(ctx.seed, &[tags::COMMITTEE, it]))?;
            select_qbc(pool, &committee, ctx.batch_size)
        }
        PolicyKind::Emc => {
            let (x, y) = labeled_matrix(pool);
            let model = LogisticModel::fit(&x, &y, &ctx.params.logistic, rng::derive(ctx.seed, &[tags::EMC_MODEL, it]))?;
            select_emc(pool, &model, ctx.batch_size, ctx.params.emc_include_bias)
        }
        PolicyKind::QueryAll => Ok(select_all(pool)),
    }
}
