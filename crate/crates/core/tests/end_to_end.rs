use coldstart_core::data::{slice_folds, synth_generate, FoldData, SynthSpec};
use coldstart_core::evaluation::{aggregate_bands, CurveBands};
use coldstart_core::math::median;
use coldstart_core::models::ForestParams;
use coldstart_core::preprocess::{annotate_profiles, SchemaSpec};
use coldstart_core::simulation::{run_experiment, train_optimistic_baseline, BaselineConfig, LearningCurve, RunConfig};

fn fold() -> (FoldData, SchemaSpec) {
    let spec = SynthSpec { positive_rate: 0.02, events_per_day: 300, n_entities: 3000, seed: 21, ..SynthSpec::default() };
    let mut events = synth_generate(&spec).unwrap().events;
    annotate_profiles(&mut events);
    (slice_folds(&events, 1, 4).unwrap().remove(0), SchemaSpec::canonical(spec.n_categoricals, spec.n_numericals))
}

fn config(sequence: &str, seed: u64) -> RunConfig {
    RunConfig {
        sequence: sequence.into(),
        seed,
        batch_size: 30,
        review_rate: 150.0,
        window_days: 3.0,
        iteration_model: ForestParams { n_trees: 50, max_depth: 3, ..ForestParams::default() },
        ..RunConfig::default()
    }
}

fn curves(f: &FoldData, s: &SchemaSpec, sequence: &str) -> Vec<LearningCurve> {
    (0..10).map(|seed| run_experiment(f, s, &config(sequence, seed)).unwrap()).collect()
}

fn area(b: &CurveBands) -> f64 {
    b.p50.iter().sum::<f64>() / b.p50.len() as f64
}

#[test]
fn query_all_dominates_random() {
    let (f, s) = fold();
    let all = curves(&f, &s, "query_all");
    let random = curves(&f, &s, "random");
    let (ba, br) = (aggregate_bands(&all).unwrap(), aggregate_bands(&random).unwrap());
    assert_eq!(ba.len(), br.len());
    assert!(area(&ba) >= area(&br), "query_all {} < random {}", area(&ba), area(&br));

    // QueryAll labels every arrival, so it is never behind on labels
    for (a, r) in all.iter().zip(&random) {
        for (x, y) in a.records.iter().zip(&r.records) {
            assert!(x.n_labeled >= y.n_labeled);
        }
    }
}

#[test]
fn optimistic_baseline_outperforms_a_short_al_run() {
    let (f, s) = fold();
    let cfg = BaselineConfig { n_trees: 30, max_depth: 10, n_trials: 3, ..BaselineConfig::default() };
    let base: Vec<f64> = (0..3).map(|seed| train_optimistic_baseline(&f, &s, &cfg, seed).unwrap().test_metric).collect();
    let al: Vec<f64> = curves(&f, &s, "random>odal>unc_entropy").iter().map(|c| c.final_metric().unwrap()).collect();
    assert!(median(&base) >= median(&al), "baseline {base:?} vs AL {al:?}");
}
