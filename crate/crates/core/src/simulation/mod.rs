//! The streaming loop: a waiting day to fit the pipeline, then alternating
//! query, label, clock advance and ingestion until the window is spent.
//! Also the optimistic baseline trained on the fully labeled train period.

use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::IndexedRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{FoldData, DAY_MS, WEEK_MS};
use crate::evaluation::{recall_at_fpr, EvalError};
use crate::linalg::Matrix;
use crate::models::{ForestParams, MaxFeatures, ModelError, RandomForest, Scorer};
use crate::oracle::{Label, Oracle};
use crate::policies::{labeled_matrix, sequence_step, PolicyError, PolicyParams, SequenceSpec, SequenceState, Stage, StepContext};
use crate::pool::{Event, PoolError, PoolPair};
use crate::preprocess::{fit_pipeline, PcaTarget, Pipeline, PreprocessError, SchemaSpec};
use crate::rng::{self, tags};

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("waiting period plus AL window ({days} days) exceeds the 28-day train period")]
    WindowTooLong { days: f64 },
    #[error("invalid run configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("no events in the waiting period")]
    EmptyWaitingPeriod,
    #[error("the train period has no events")]
    EmptyTrain,
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Pool(#[from] PoolError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

const TRAIN_DAYS: f64 = 28.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Set per run, not read from configuration files.
    #[serde(skip)]
    pub sequence: String,
    pub batch_size: usize,
    /// Events the analysts review per day.
    pub review_rate: f64,
    pub waiting_days: f64,
    pub window_days: f64,
    /// Kept components. A component count above the encoded width is
    /// clamped to it.
    pub pca: PcaTarget,
    pub iteration_model: ForestParams,
    pub policy: PolicyParams,
    /// False positive rate of the recall metric.
    pub alpha: f64,
    /// Evaluate every `eval_stride` iterations (and always at the last one).
    pub eval_stride: usize,
    #[serde(skip)]
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            sequence: String::from("random>odal>unc_entropy"),
            batch_size: 100,
            review_rate: 1000.0,
            waiting_days: 1.0,
            window_days: 7.0,
            pca: PcaTarget::default(),
            iteration_model: ForestParams { n_trees: 200, max_depth: 3, ..ForestParams::default() },
            policy: PolicyParams::default(),
            alpha: 0.01,
            eval_stride: 1,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<SequenceSpec, SimError> {
        let spec = SequenceSpec::parse(&self.sequence)?;
        if self.batch_size == 0 {
            return Err(SimError::InvalidConfig("batch_size must be positive"));
        }
        if !(self.review_rate > 0.0) || !(self.waiting_days > 0.0) || !(self.window_days >= 0.0) {
            return Err(SimError::InvalidConfig("review_rate and waiting_days must be positive, window_days non-negative"));
        }
        if self.waiting_days + self.window_days > TRAIN_DAYS {
            return Err(SimError::WindowTooLong { days: self.waiting_days + self.window_days });
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(SimError::InvalidConfig("alpha must lie in (0, 1)"));
        }
        if self.eval_stride == 0 {
            return Err(SimError::InvalidConfig("eval_stride must be positive"));
        }
        Ok(spec)
    }

    /// Simulated milliseconds spent reviewing one batch.
    pub fn step_ms(&self) -> i64 {
        (self.batch_size as f64 / self.review_rate * DAY_MS as f64).round() as i64
    }

    pub fn n_iterations(&self) -> usize {
        (self.window_days * self.review_rate / self.batch_size as f64 + 1e-9) as usize
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Clock after the batch was reviewed and new events ingested.
    pub sim_time_ms: i64,
    pub n_labeled: usize,
    pub n_positives: usize,
    /// Stage whose policy chose this batch.
    pub stage: Stage,
    /// Whether this iteration is an evaluation point (every `eval_stride`
    /// iterations and the last one).
    pub checkpoint: bool,
    /// Test recall; `None` off-checkpoint or before both classes are labeled.
    pub metric: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    pub records: Vec<IterationRecord>,
    /// The pool ran dry before the window was spent.
    pub truncated: bool,
    pub label_reveals: u64,
}

impl LearningCurve {
    /// Metric at each checkpoint, undefined points read as 0.
    pub fn metric_series(&self) -> Vec<f64> {
        self.records.iter().filter(|r| r.checkpoint).map(|r| r.metric.unwrap_or(0.0)).collect()
    }

    pub fn final_metric(&self) -> Option<f64> {
        self.records.last().map(|r| r.metric.unwrap_or(0.0))
    }
}

/// Feature matrix and oracle-revealed labels of held-out events.
#[derive(Clone, Debug)]
pub struct TestSet {
    pub x: Matrix,
    pub labels: Vec<Label>,
}

impl TestSet {
    pub fn new(pipeline: &Pipeline, events: &[Event]) -> Self {
        let mut oracle = Oracle::new();
        let mut x = Matrix::zeros(events.len(), pipeline.output_dim());
        for (i, e) in events.iter().enumerate() {
            x.row_mut(i).copy_from_slice(&pipeline.transform(e).values);
        }
        Self { x, labels: oracle.label_all(events) }
    }

    pub fn both_classes(&self) -> bool {
        let pos = self.labels.iter().filter(|l| l.is_positive()).count();
        pos > 0 && pos < self.labels.len()
    }
}

/// Random forest on the labeled pool.
pub fn fit_iteration_model(pool: &PoolPair, params: &ForestParams, seed: u64) -> Result<RandomForest, ModelError> {
    let (x, y) = labeled_matrix(pool);
    RandomForest::fit(&x, &y, params, seed)
}

pub fn evaluate_model(model: &dyn Scorer, test: &TestSet, alpha: f64) -> Result<f64, SimError> {
    Ok(recall_at_fpr(&model.score_rows(&test.x)?, &test.labels, alpha)?)
}

fn clamp_target(target: PcaTarget, schema: &SchemaSpec) -> PcaTarget {
    match target {
        PcaTarget::Components(k) => PcaTarget::Components(k.min(schema.encoded_dim())),
        t => t,
    }
}

/// Start of the AL segment: the waiting day and window end with the train
/// period.
pub fn al_start_ms(fold: &FoldData, config: &RunConfig) -> i64 {
    fold.train_end_ms() - ((config.waiting_days + config.window_days) * DAY_MS as f64).round() as i64
}

/// Runs one sequence over one fold. Events must carry their profiles.
pub fn run_experiment(fold: &FoldData, schema: &SchemaSpec, config: &RunConfig) -> Result<LearningCurve, SimError> {
    let spec = config.validate()?;
    let start = al_start_ms(fold, config);
    let waiting_end = start + (config.waiting_days * DAY_MS as f64).round() as i64;
    let train = &fold.train;
    let a = train.partition_point(|e| e.timestamp < start);
    let mut cursor = train.partition_point(|e| e.timestamp < waiting_end);
    let waiting = &train[a..cursor];
    if waiting.is_empty() {
        return Err(SimError::EmptyWaitingPeriod);
    }
    let pipeline = fit_pipeline(waiting, schema, clamp_target(config.pca, schema))?;
    let test = TestSet::new(&pipeline, &fold.test);
    let can_evaluate = test.both_classes();

    let mut pool = PoolPair::new();
    pool.ingest(waiting.iter().map(|e| (e.clone(), pipeline.transform(e))).collect())?;
    let mut oracle = Oracle::new();
    let mut state = SequenceState::new(spec);
    let mut curve = LearningCurve::default();
    let mut forest: Option<RandomForest> = None;
    let mut clock = waiting_end;
    let end = fold.train_end_ms();
    let n_iter = config.n_iterations();
    let step = config.step_ms();

    for it in 0..n_iter {
        let counts = pool.label_counts();
        if pool.unlabeled_len() > 0 {
            if state.next_policy(counts).needs_forest() && forest.is_none() {
                forest = Some(fit_iteration_model(&pool, &config.iteration_model, rng::derive(config.seed, &[tags::ITERATION_MODEL, it as u64]))?);
            }
            let ctx = StepContext {
                batch_size: config.batch_size,
                seed: config.seed,
                iteration: it as u64,
                params: &config.policy,
                forest: forest.as_ref(),
            };
            let query = sequence_step(&mut state, &pool, &ctx)?;
            let labels = oracle.label_all(query.event_ids.iter().map(|id| &pool.get(*id).expect("queried id in pool").event));
            pool.move_to_labeled(&query, &labels)?;
            forest = None;
        } else if cursor >= train.len() || train[cursor].timestamp >= end {
            curve.truncated = true;
            break;
        }

        let labeled_this_step = curve.records.last().map_or(0, |r| r.n_labeled) < pool.labeled_len();
        clock = (clock + step).min(end);
        let from = cursor;
        while cursor < train.len() && train[cursor].timestamp < clock {
            cursor += 1;
        }
        pool.ingest(train[from..cursor].iter().map(|e| (e.clone(), pipeline.transform(e))).collect())?;
        if !labeled_this_step {
            continue;
        }

        let counts = pool.label_counts();
        let last = it + 1 == n_iter;
        let checkpoint = it % config.eval_stride == 0 || last;
        let eval_due = can_evaluate && checkpoint;
        let mut metric = None;
        if counts.both_classes() && (eval_due || state.next_policy(counts).needs_forest()) {
            let model = fit_iteration_model(&pool, &config.iteration_model, rng::derive(config.seed, &[tags::ITERATION_MODEL, it as u64 + 1]))?;
            if eval_due {
                metric = Some(evaluate_model(&model, &test, config.alpha)?);
            }
            forest = Some(model);
        }
        curve.records.push(IterationRecord {
            iteration: it,
            sim_time_ms: clock,
            n_labeled: pool.labeled_len(),
            n_positives: counts.positive,
            stage: state.stage,
            checkpoint,
            metric,
        });
    }
    curve.label_reveals = oracle.reveals();
    Ok(curve)
}

/// One point of the baseline hyper-parameter search.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineTrial {
    /// Fraction of features kept, most important first.
    pub feature_fraction: f64,
    pub min_samples_leaf: usize,
    pub balanced_class_weight: bool,
    pub ccp_alpha: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub n_trials: usize,
    pub pca: PcaTarget,
    pub alpha: f64,
    /// Replaces the random search when set.
    pub candidates: Option<Vec<BaselineTrial>>,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self { n_trees: 300, max_depth: 20, n_trials: 5, pca: PcaTarget::default(), alpha: 0.01, candidates: None }
    }
}

impl BaselineConfig {
    fn forest(&self, t: &BaselineTrial) -> ForestParams {
        ForestParams {
            n_trees: self.n_trees,
            max_depth: self.max_depth,
            max_features: MaxFeatures::Sqrt,
            min_samples_leaf: t.min_samples_leaf,
            balanced_class_weight: t.balanced_class_weight,
            ccp_alpha: t.ccp_alpha,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BaselineResult {
    pub trial: BaselineTrial,
    pub validation: Vec<f64>,
    pub test_metric: f64,
    /// Labels the baseline consumed: the whole train period.
    pub n_labels: usize,
    pub model: RandomForest,
    /// Columns of the PCA output the model reads.
    pub features: Vec<usize>,
}

fn sample_trials(n: usize, r: &mut rng::Rng) -> Vec<BaselineTrial> {
    const LEAF: [usize; 5] = [1, 2, 5, 10, 20];
    const CCP: [f64; 4] = [0.0, 1e-5, 1e-4, 1e-3];
    (0..n)
        .map(|_| BaselineTrial {
            feature_fraction: r.random_range(0.4..=1.0),
            min_samples_leaf: *LEAF.choose(r).expect("non-empty"),
            balanced_class_weight: r.random_bool(0.5),
            ccp_alpha: *CCP.choose(r).expect("non-empty"),
        })
        .collect()
}

fn top_features(ranking: &[usize], fraction: f64) -> Vec<usize> {
    let k = ((ranking.len() as f64 * fraction).ceil() as usize).clamp(1, ranking.len());
    let mut keep = ranking[..k].to_vec();
    keep.sort_unstable();
    keep
}

/// Random search over [`BaselineTrial`]s: fit on weeks 1-3, validate on week
/// 4, refit the winner on all four weeks and score the test period.
pub fn train_optimistic_baseline(
    fold: &FoldData,
    schema: &SchemaSpec,
    config: &BaselineConfig,
    seed: u64,
) -> Result<BaselineResult, SimError> {
    if fold.train.is_empty() {
        return Err(SimError::EmptyTrain);
    }
    let pipeline = fit_pipeline(&fold.train, schema, clamp_target(config.pca, schema))?;
    let all = TestSet::new(&pipeline, &fold.train);
    let test = TestSet::new(&pipeline, &fold.test);
    let split = fold.train.partition_point(|e| e.timestamp < fold.start_ms + 3 * WEEK_MS);
    let rows_fit: Vec<usize> = (0..split).collect();
    let rows_val: Vec<usize> = (split..fold.train.len()).collect();
    let x_fit = all.x.select_rows(&rows_fit);
    let y_fit = &all.labels[..split];
    let x_val = all.x.select_rows(&rows_val);
    let y_val = &all.labels[split..];

    let mut r = rng::derived_stream(seed, &[tags::BASELINE]);
    let trials = match &config.candidates {
        Some(c) if !c.is_empty() => c.clone(),
        _ => sample_trials(config.n_trials.max(1), &mut r),
    };

    // importance ranking from a plain forest on weeks 1-3
    let ranker = RandomForest::fit(
        &x_fit,
        y_fit,
        &ForestParams { n_trees: 50, max_depth: 8, ..ForestParams::default() },
        rng::derive(seed, &[tags::BASELINE, 1]),
    )?;
    let imp = ranker.feature_importances();
    let mut ranking: Vec<usize> = (0..imp.len()).collect();
    ranking.sort_by(|&a, &b| imp[b].total_cmp(&imp[a]).then(a.cmp(&b)));

    let val_ok = {
        let pos = y_val.iter().filter(|l| l.is_positive()).count();
        pos > 0 && pos < y_val.len()
    };
    let mut validation = Vec::with_capacity(trials.len());
    for (i, t) in trials.iter().enumerate() {
        if trials.len() == 1 {
            validation.push(0.0);
            break;
        }
        let cols = top_features(&ranking, t.feature_fraction);
        let m = RandomForest::fit(&x_fit.select_columns(&cols), y_fit, &config.forest(t), rng::derive(seed, &[tags::BASELINE, 2, i as u64]))?;
        validation.push(if val_ok {
            recall_at_fpr(&m.predict_proba_rows(&x_val.select_columns(&cols))?, y_val, config.alpha)?
        } else {
            0.0
        });
    }
    let best = (0..trials.len()).fold(0, |b, i| if validation[i] > validation[b] { i } else { b });
    let trial = trials[best];
    let features = top_features(&ranking, trial.feature_fraction);
    let model = RandomForest::fit(&all.x.select_columns(&features), &all.labels, &config.forest(&trial), rng::derive(seed, &[tags::BASELINE, 3]))?;
    let test_metric = recall_at_fpr(&model.predict_proba_rows(&test.x.select_columns(&features))?, &test.labels, config.alpha)?;
    Ok(BaselineResult { trial, validation, test_metric, n_labels: fold.train.len(), model, features })
}

#[cfg(test)]
mod tests;
