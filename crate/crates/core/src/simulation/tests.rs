use alloc::vec;
use alloc::vec::Vec;

use super::*;
use crate::data::{slice_folds, synth_generate, SynthSpec};
use crate::preprocess::annotate_profiles;

fn fold(rate: f64, per_day: usize, seed: u64) -> (FoldData, SchemaSpec) {
    let spec = SynthSpec { positive_rate: rate, events_per_day: per_day, weeks: 8, seed, n_numericals: 4, ..SynthSpec::default() };
    let mut events = synth_generate(&spec).unwrap().events;
    annotate_profiles(&mut events);
    let schema = SchemaSpec::canonical(spec.n_categoricals, spec.n_numericals);
    (slice_folds(&events, 1, 4).unwrap().remove(0), schema)
}

fn small(sequence: &str) -> RunConfig {
    RunConfig {
        sequence: sequence.into(),
        window_days: 1.0,
        iteration_model: ForestParams { n_trees: 20, max_depth: 3, ..ForestParams::default() },
        ..RunConfig::default()
    }
}

#[test]
fn one_day_window_gives_ten_batches() {
    let (f, schema) = fold(0.02, 1500, 1);
    let c = small("random");
    let curve = run_experiment(&f, &schema, &c).unwrap();
    assert_eq!(curve.records.len(), 10);
    assert_eq!(curve.records.last().unwrap().n_labeled, 1000);
    assert_eq!(curve.label_reveals, 1000);
    assert!(!curve.truncated);
    for (i, r) in curve.records.iter().enumerate() {
        assert_eq!(r.n_labeled, 100 * (i + 1));
    }
    assert_eq!(c.step_ms(), 8_640_000);
}

#[test]
fn zero_window_is_empty() {
    let (f, schema) = fold(0.02, 200, 1);
    let c = RunConfig { window_days: 0.0, ..small("random") };
    let curve = run_experiment(&f, &schema, &c).unwrap();
    assert!(curve.records.is_empty());
    assert_eq!(curve.label_reveals, 0);
}

#[test]
fn window_longer_than_train_is_rejected() {
    let (f, schema) = fold(0.02, 200, 1);
    let c = RunConfig { window_days: 28.0, ..small("random") };
    assert_eq!(run_experiment(&f, &schema, &c).unwrap_err(), SimError::WindowTooLong { days: 29.0 });
    let c = small("random>nope");
    assert!(matches!(run_experiment(&f, &schema, &c), Err(SimError::Policy(PolicyError::UnknownId(_)))));
}

#[test]
fn curve_invariants_hold_for_every_sequence() {
    let (f, schema) = fold(0.02, 600, 2);
    for id in crate::policies::REGISTERED_SEQUENCES {
        let c = RunConfig { window_days: 1.0, review_rate: 500.0, batch_size: 50, ..small(id) };
        let curve = run_experiment(&f, &schema, &c).unwrap();
        assert_eq!(curve.label_reveals as usize, curve.records.last().unwrap().n_labeled, "{id}");
        let mut prev = 0;
        let mut seen_metric = false;
        for r in &curve.records {
            assert!(r.n_labeled > prev, "{id}");
            if id != "query_all" {
                assert!(r.n_labeled - prev <= 50, "{id}");
            }
            prev = r.n_labeled;
            let both = r.n_positives > 0 && r.n_positives < r.n_labeled;
            if !both {
                assert_eq!(r.metric, None);
            } else {
                seen_metric = true;
                assert!(r.metric.is_some(), "{id}");
            }
        }
        assert!(seen_metric, "{id}");
    }
}

#[test]
fn runs_are_deterministic() {
    let (f, schema) = fold(0.02, 500, 3);
    let c = RunConfig { seed: 9, ..small("random>odal>unc_entropy") };
    assert_eq!(run_experiment(&f, &schema, &c).unwrap(), run_experiment(&f, &schema, &c).unwrap());
}

#[test]
fn ingestion_follows_the_clock() {
    let (f, schema) = fold(0.02, 400, 4);
    let c = small("random");
    let start = al_start_ms(&f, &c);
    let curve = run_experiment(&f, &schema, &c).unwrap();
    for r in &curve.records {
        // everything up to the clock has arrived, nothing after it
        let arrived = f.train.iter().filter(|e| e.timestamp >= start && e.timestamp < r.sim_time_ms).count();
        assert!(r.n_labeled <= arrived);
    }
    assert_eq!(curve.records.last().unwrap().sim_time_ms, f.train_end_ms());
}

#[test]
fn query_all_labels_every_arrival() {
    let (f, schema) = fold(0.02, 300, 5);
    let c = small("query_all");
    let start = al_start_ms(&f, &c);
    let curve = run_experiment(&f, &schema, &c).unwrap();
    for r in &curve.records {
        // every event that arrived before the previous clock tick is labeled
        let before = f.train.iter().filter(|e| e.timestamp >= start && e.timestamp < r.sim_time_ms - c.step_ms()).count();
        assert_eq!(r.n_labeled, before);
    }
}

#[test]
fn stops_early_when_the_pool_runs_dry() {
    let (mut f, schema) = fold(0.02, 150, 6);
    let c = RunConfig { window_days: 2.0, ..small("random") };
    // nothing arrives after the waiting day
    let waiting_end = al_start_ms(&f, &c) + DAY_MS;
    f.train.retain(|e| e.timestamp < waiting_end);
    let curve = run_experiment(&f, &schema, &c).unwrap();
    assert!(curve.truncated);
    assert_eq!(curve.records.len(), 2);
    assert_eq!(curve.records[1].n_labeled, 150);
}

#[test]
fn iteration_model_shape_and_one_positive() {
    let (f, schema) = fold(0.02, 300, 7);
    let pipeline = fit_pipeline(&f.train[..300], &schema, PcaTarget::Components(5)).unwrap();
    let mut pool = PoolPair::new();
    pool.ingest(f.train[..101].iter().map(|e| (e.clone(), pipeline.transform(e))).collect()).unwrap();
    let q = crate::policies::select_all(&pool);
    let mut labels = vec![Label::Negative; 101];
    labels[50] = Label::Positive;
    pool.move_to_labeled(&q, &labels).unwrap();
    let params = ForestParams { n_trees: 200, max_depth: 3, ..ForestParams::default() };
    let m = fit_iteration_model(&pool, &params, 1).unwrap();
    assert_eq!(m.n_trees(), 200);
    assert!(m.max_depth() <= 3);
    let m2 = fit_iteration_model(&pool, &params, 1).unwrap();
    let test = TestSet::new(&pipeline, &f.test[..200]);
    assert_eq!(m.score_rows(&test.x).unwrap(), m2.score_rows(&test.x).unwrap());
}

#[test]
fn evaluate_perfect_and_constant_models() {
    struct Fixed(Vec<f64>);
    impl Scorer for Fixed {
        fn n_features(&self) -> usize {
            0
        }
        fn score_rows(&self, _: &Matrix) -> Result<Vec<f64>, ModelError> {
            Ok(self.0.clone())
        }
    }
    let labels = vec![Label::Negative, Label::Positive, Label::Negative, Label::Positive];
    let test = TestSet { x: Matrix::zeros(4, 0), labels: labels.clone() };
    let perfect = Fixed(labels.iter().map(|l| l.as_f64()).collect());
    assert_eq!(evaluate_model(&perfect, &test, 0.01).unwrap(), 1.0);
    assert_eq!(evaluate_model(&Fixed(vec![0.2; 4]), &test, 0.3).unwrap(), 0.0);
    let single = TestSet { x: Matrix::zeros(2, 0), labels: vec![Label::Negative; 2] };
    assert!(evaluate_model(&Fixed(vec![0.2; 2]), &single, 0.3).is_err());
}

fn tiny_baseline() -> BaselineConfig {
    BaselineConfig { n_trees: 15, max_depth: 8, n_trials: 3, ..BaselineConfig::default() }
}

#[test]
fn baseline_single_candidate_equals_direct_fit() {
    let (f, schema) = fold(0.05, 150, 8);
    let trial = BaselineTrial { feature_fraction: 1.0, min_samples_leaf: 2, balanced_class_weight: false, ccp_alpha: 0.0 };
    let cfg = BaselineConfig { candidates: Some(vec![trial]), ..tiny_baseline() };
    let res = train_optimistic_baseline(&f, &schema, &cfg, 4).unwrap();
    assert_eq!(res.trial, trial);
    let pipeline = fit_pipeline(&f.train, &schema, clamp_target(cfg.pca, &schema)).unwrap();
    let all = TestSet::new(&pipeline, &f.train);
    let test = TestSet::new(&pipeline, &f.test);
    let direct = RandomForest::fit(&all.x, &all.labels, &cfg.forest(&trial), rng::derive(4, &[tags::BASELINE, 3])).unwrap();
    let expect = recall_at_fpr(&direct.predict_proba_rows(&test.x).unwrap(), &test.labels, cfg.alpha).unwrap();
    assert_eq!(res.test_metric, expect);
    assert_eq!(res.n_labels, f.train.len());
}

#[test]
fn baseline_is_deterministic() {
    let (f, schema) = fold(0.05, 150, 9);
    let a = train_optimistic_baseline(&f, &schema, &tiny_baseline(), 2).unwrap();
    let b = train_optimistic_baseline(&f, &schema, &tiny_baseline(), 2).unwrap();
    assert_eq!(a.trial, b.trial);
    assert_eq!(a.validation, b.validation);
    assert_eq!(a.test_metric, b.test_metric);
    assert_eq!(a.validation.len(), 3);
}

#[test]
fn top_features_keeps_at_least_one() {
    assert_eq!(top_features(&[3, 1, 0, 2], 0.01), vec![3]);
    assert_eq!(top_features(&[3, 1, 0, 2], 0.5), vec![1, 3]);
    assert_eq!(top_features(&[3, 1, 0, 2], 1.0), vec![0, 1, 2, 3]);
}

#[test]
fn metric_series_reads_checkpoints_and_fills_gaps_with_zero() {
    let rec = |checkpoint, m| IterationRecord {
        iteration: 0,
        sim_time_ms: 0,
        n_labeled: 1,
        n_positives: 0,
        stage: Stage::Cold,
        checkpoint,
        metric: m,
    };
    let records = vec![rec(true, None), rec(false, None), rec(true, Some(0.4))];
    let c = LearningCurve { records, truncated: false, label_reveals: 3 };
    assert_eq!(c.metric_series(), vec![0.0, 0.4]);
    assert_eq!(c.final_metric(), Some(0.4));
}

#[test]
fn checkpoints_follow_the_stride_and_the_last_iteration() {
    let (f, schema) = fold(0.02, 1500, 1);
    let c = RunConfig { eval_stride: 4, ..small("random") };
    let curve = run_experiment(&f, &schema, &c).unwrap();
    let points: Vec<usize> = curve.records.iter().filter(|r| r.checkpoint).map(|r| r.iteration).collect();
    assert_eq!(points, vec![0, 4, 8, 9]);
    for r in curve.records.iter().filter(|r| !r.checkpoint) {
        assert_eq!(r.metric, None);
    }
    assert_eq!(curve.metric_series().len(), 4);
}
