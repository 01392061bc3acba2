//! Runs every (fold, sequence, seed) combination of an experiment plus the
//! optimistic baselines, in parallel, and writes keyed result files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use coldstart_core::data::{slice_folds, synth_generate, undersample_entities, FoldData};
use coldstart_core::preprocess::{annotate_profiles, SchemaSpec};
use coldstart_core::simulation::{run_experiment, train_optimistic_baseline, BaselineTrial, LearningCurve};
use coldstart_core::Event;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, DatasetSource, ExperimentConfig};
use crate::csvio::{load_csv, CsvError};
use crate::output::{csv_bytes, write_atomic};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Csv(#[from] CsvError),
    #[error("data: {0}")]
    Data(#[from] coldstart_core::data::DataError),
    #[error("{key}: {source}")]
    Sim { key: String, source: coldstart_core::simulation::SimError },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("thread pool: {0}")]
    Pool(String),
}

impl RunError {
    /// Configuration and input problems, as opposed to failures while running.
    pub fn is_validation(&self) -> bool {
        matches!(self, RunError::Config(_) | RunError::Csv(_))
    }
}

/// Identifies one simulation run.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RunKey {
    pub dataset: String,
    pub sequence: String,
    pub fold: usize,
    pub seed: u64,
}

impl std::fmt::Display for RunKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}/fold{}/seed{}", self.dataset, self.sequence, self.fold, self.seed)
    }
}

/// One line of a curve file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordLine {
    pub dataset: String,
    pub sequence: String,
    pub fold: usize,
    pub seed: u64,
    pub iteration: usize,
    pub sim_time_ms: i64,
    pub n_labeled: usize,
    pub n_positives: usize,
    pub stage: String,
    /// Evaluation point; files without the field count every line.
    #[serde(default = "yes")]
    pub checkpoint: bool,
    pub metric_name: String,
    pub metric_value: Option<f64>,
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub dataset: String,
    pub fold: usize,
    pub seed: u64,
    pub test_metric: f64,
    pub n_labels: usize,
    pub feature_fraction: f64,
    pub min_samples_leaf: usize,
    pub balanced_class_weight: bool,
    pub ccp_alpha: f64,
}

#[derive(Clone, Debug, Default)]
pub struct ExperimentResults {
    pub curves: BTreeMap<RunKey, LearningCurve>,
    pub baselines: Vec<BaselineRow>,
    pub metric_name: String,
}

/// Loads or generates the event stream, applies undersampling, fills the
/// entity profiles and slices the folds.
pub fn prepare_folds(cfg: &ExperimentConfig) -> Result<(SchemaSpec, Vec<FoldData>), RunError> {
    let schema = cfg.schema()?;
    let mut events: Vec<Event> = match &cfg.dataset {
        DatasetSource::Csv(src) => load_csv(&src.path, &schema)?,
        DatasetSource::Synth(_) => {
            let spec = cfg.dataset.synth_spec()?.expect("synthetic source");
            let stream = synth_generate(&spec)?;
            if stream.sparse_positives {
                eprintln!("warning: fewer than one positive expected; folds may contain none");
            }
            stream.events
        }
    };
    if cfg.folds.undersample_rate < 1.0 {
        events = undersample_entities(&events, cfg.folds.undersample_rate, 0)?;
    }
    annotate_profiles(&mut events);
    let folds = slice_folds(&events, cfg.folds.n_folds, cfg.folds.stride_weeks)?;
    Ok((schema, folds))
}

enum Task<'a> {
    Baseline { fold: &'a FoldData, seed: u64 },
    Run { fold: &'a FoldData, sequence: &'a str, seed: u64 },
}

enum Outcome {
    Baseline(BaselineRow),
    Run(RunKey, LearningCurve),
}

pub fn metric_name(alpha: f64) -> String {
    format!("recall_at_fpr_{alpha}")
}

/// Executes all runs with `jobs` worker threads (all cores when `None`).
/// Results do not depend on the thread count.
pub fn execute(cfg: &ExperimentConfig, jobs: Option<usize>) -> Result<ExperimentResults, RunError> {
    let (schema, folds) = prepare_folds(cfg)?;
    let mut tasks = Vec::new();
    let n_base = cfg.baseline_seeds.unwrap_or(cfg.seeds);
    for fold in &folds {
        for seed in 0..n_base as u64 {
            tasks.push(Task::Baseline { fold, seed });
        }
    }
    for fold in &folds {
        for sequence in &cfg.sequences {
            for seed in 0..cfg.seeds as u64 {
                tasks.push(Task::Run { fold, sequence, seed });
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| RunError::Pool(e.to_string()))?;
    let outcomes: Vec<Result<Outcome, RunError>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|t| match *t {
                Task::Baseline { fold, seed } => {
                    let key = format!("{}/baseline/fold{}/seed{seed}", cfg.name, fold.index);
                    let res = train_optimistic_baseline(fold, &schema, &cfg.baseline, seed)
                        .map_err(|source| RunError::Sim { key, source })?;
                    Ok(Outcome::Baseline(baseline_row(&cfg.name, fold.index, seed, res.test_metric, res.n_labels, &res.trial)))
                }
                Task::Run { fold, sequence, seed } => {
                    let key = RunKey { dataset: cfg.name.clone(), sequence: sequence.to_owned(), fold: fold.index, seed };
                    let mut rc = cfg.run.clone();
                    rc.sequence = sequence.to_owned();
                    rc.seed = seed;
                    let curve = run_experiment(fold, &schema, &rc).map_err(|source| RunError::Sim { key: key.to_string(), source })?;
                    Ok(Outcome::Run(key, curve))
                }
            })
            .collect()
    });
    let mut results = ExperimentResults { metric_name: metric_name(cfg.run.alpha), ..Default::default() };
    for o in outcomes {
        match o? {
            Outcome::Baseline(b) => results.baselines.push(b),
            Outcome::Run(k, c) => {
                results.curves.insert(k, c);
            }
        }
    }
    Ok(results)
}

fn baseline_row(dataset: &str, fold: usize, seed: u64, test_metric: f64, n_labels: usize, t: &BaselineTrial) -> BaselineRow {
    BaselineRow {
        dataset: dataset.to_owned(),
        fold,
        seed,
        test_metric,
        n_labels,
        feature_fraction: t.feature_fraction,
        min_samples_leaf: t.min_samples_leaf,
        balanced_class_weight: t.balanced_class_weight,
        ccp_alpha: t.ccp_alpha,
    }
}

/// File-system friendly form of a sequence id.
pub fn sequence_slug(sequence: &str) -> String {
    sequence.replace('>', "__")
}

pub fn curve_path(out: &Path, key: &RunKey) -> PathBuf {
    out.join("curves")
        .join(&key.dataset)
        .join(sequence_slug(&key.sequence))
        .join(format!("fold{}_seed{}.jsonl", key.fold, key.seed))
}

pub fn curve_lines(key: &RunKey, curve: &LearningCurve, metric_name: &str) -> Vec<RecordLine> {
    curve
        .records
        .iter()
        .map(|r| RecordLine {
            dataset: key.dataset.clone(),
            sequence: key.sequence.clone(),
            fold: key.fold,
            seed: key.seed,
            iteration: r.iteration,
            sim_time_ms: r.sim_time_ms,
            n_labeled: r.n_labeled,
            n_positives: r.n_positives,
            stage: r.stage.as_str().to_owned(),
            checkpoint: r.checkpoint,
            metric_name: metric_name.to_owned(),
            metric_value: r.metric,
        })
        .collect()
}

pub const RUNS_HEADER: [&str; 10] =
    ["dataset", "sequence", "fold", "seed", "iterations", "n_labeled", "n_positives", "final_metric", "truncated", "label_reveals"];

pub const BASELINE_HEADER: [&str; 9] = [
    "dataset",
    "fold",
    "seed",
    "test_metric",
    "n_labels",
    "feature_fraction",
    "min_samples_leaf",
    "balanced_class_weight",
    "ccp_alpha",
];

/// Writes one curve file per run, `runs.csv` and `baselines.csv`.
pub fn write_results(results: &ExperimentResults, out: &Path) -> Result<(), RunError> {
    let io = |path: &Path| {
        let path = path.display().to_string();
        move |source| RunError::Io { path, source }
    };
    for (key, curve) in &results.curves {
        let mut buf = Vec::new();
        for line in curve_lines(key, curve, &results.metric_name) {
            serde_json::to_writer(&mut buf, &line).expect("record serializes");
            buf.push(b'\n');
        }
        let p = curve_path(out, key);
        write_atomic(&p, &buf).map_err(io(&p))?;
    }
    let runs = results.curves.iter().map(|(k, c)| {
        let last = c.records.last();
        vec![
            k.dataset.clone(),
            k.sequence.clone(),
            k.fold.to_string(),
            k.seed.to_string(),
            c.records.len().to_string(),
            last.map_or(0, |r| r.n_labeled).to_string(),
            last.map_or(0, |r| r.n_positives).to_string(),
            last.and_then(|r| r.metric).map_or(String::new(), |m| m.to_string()),
            c.truncated.to_string(),
            c.label_reveals.to_string(),
        ]
    });
    let p = out.join("runs.csv");
    write_atomic(&p, &csv_bytes(&RUNS_HEADER, runs)).map_err(io(&p))?;
    let mut base = results.baselines.clone();
    base.sort_by(|a, b| (&a.dataset, a.fold, a.seed).cmp(&(&b.dataset, b.fold, b.seed)));
    let rows = base.iter().map(|b| {
        vec![
            b.dataset.clone(),
            b.fold.to_string(),
            b.seed.to_string(),
            b.test_metric.to_string(),
            b.n_labels.to_string(),
            b.feature_fraction.to_string(),
            b.min_samples_leaf.to_string(),
            b.balanced_class_weight.to_string(),
            b.ccp_alpha.to_string(),
        ]
    });
    let p = out.join("baselines.csv");
    write_atomic(&p, &csv_bytes(&BASELINE_HEADER, rows)).map_err(io(&p))?;
    Ok(())
}
