use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const TINY: &str = r#"
name = "tiny"
seeds = 1
sequences = ["random"]

[dataset]
source = "synth"
positive_rate = 0.05
events_per_day = 200
n_entities = 500

[run]
batch_size = 20
review_rate = 200.0
window_days = 1.0

[run.iteration_model]
n_trees = 10

[baseline]
n_trees = 10
max_depth = 6
n_trials = 2
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_coldstart"))
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("exp.toml");
    fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Relative path and contents of every file under `dir`, sorted.
fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn tiny_run_writes_one_curve_and_one_summary_row() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), TINY);
    let out = tmp.path().join("out");
    let o = run(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));

    let files = snapshot(&out.join("curves"));
    assert_eq!(files.len(), 1);
    assert_eq!(files[0].0, Path::new("tiny/random/fold0_seed0.jsonl"));
    let text = String::from_utf8(files[0].1.clone()).unwrap();
    let lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 10);
    assert_eq!(lines[9]["n_labeled"], 200);
    assert_eq!(lines[0]["metric_name"], "recall_at_fpr_0.01");

    let runs = fs::read_to_string(out.join("runs.csv")).unwrap();
    assert_eq!(runs.lines().count(), 2);
    assert!(runs.lines().nth(1).unwrap().starts_with("tiny,random,0,0,10,200,"));
    let base = fs::read_to_string(out.join("baselines.csv")).unwrap();
    assert_eq!(base.lines().count(), 2);
}

#[test]
fn unknown_policy_is_a_validation_error_naming_it() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &TINY.replace(r#"["random"]"#, r#"["random>magic"]"#));
    let o = run(&["run", "--config", cfg.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("magic"), "{}", stderr(&o));

    let cfg = write_config(tmp.path(), TINY);
    let o = run(&["run", "--config", cfg.to_str().unwrap(), "--out", "x", "--sequences", "random,nope"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("nope"));
}

#[test]
fn malformed_inputs_exit_with_one() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &TINY.replace("seeds = 1", "seeds = 0"));
    let o = run(&["run", "--config", cfg.to_str().unwrap(), "--out", "x"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("seeds"));

    let cfg = write_config(tmp.path(), &TINY.replace("batch_size = 20", "batch_size = 20\nbogus = 3"));
    let o = run(&["run", "--config", cfg.to_str().unwrap(), "--out", "x"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("bogus"));

    assert_eq!(run(&["run"]).status.code(), Some(1));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["run", "--config", "/nonexistent/exp.toml", "--out", "x"]).status.code(), Some(1));
    assert_eq!(run(&["synth", "--preset", "nope", "--out", "x.csv"]).status.code(), Some(1));
    assert!(run(&["--help"]).status.success());
}

#[test]
fn unwritable_output_is_a_runtime_failure() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), TINY);
    let blocker = tmp.path().join("file");
    fs::write(&blocker, b"").unwrap();
    let o = run(&["run", "--config", cfg.to_str().unwrap(), "--out", blocker.join("out").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn reruns_are_byte_identical_and_independent_of_jobs() {
    let tmp = TempDir::new().unwrap();
    let text = TINY.replace("seeds = 1", "seeds = 3").replace(r#"["random"]"#, r#"["random", "random>odal>unc_entropy"]"#);
    let cfg = write_config(tmp.path(), &text);
    let mut snaps = Vec::new();
    for (i, jobs) in ["1", "1", "3"].iter().enumerate() {
        let out = tmp.path().join(format!("out{i}"));
        let o = run(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--jobs", jobs]);
        assert!(o.status.success(), "{}", stderr(&o));
        snaps.push(snapshot(&out));
    }
    assert_eq!(snaps[0].len(), 6 + 2);
    assert_eq!(snaps[0], snaps[1]);
    assert_eq!(snaps[0], snaps[2]);
}

#[test]
fn seed_and_sequence_overrides() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), TINY);
    let out = tmp.path().join("out");
    let o = run(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--seeds",
        "2",
        "--sequences",
        "random,outlier_detect",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let names: Vec<PathBuf> = snapshot(&out.join("curves")).into_iter().map(|(p, _)| p).collect();
    assert_eq!(
        names,
        [
            "tiny/outlier_detect/fold0_seed0.jsonl",
            "tiny/outlier_detect/fold0_seed1.jsonl",
            "tiny/random/fold0_seed0.jsonl",
            "tiny/random/fold0_seed1.jsonl",
        ]
        .map(PathBuf::from)
    );
}

#[test]
fn report_after_run() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &TINY.replace("seeds = 1", "seeds = 2"));
    let out = tmp.path().join("out");
    assert!(run(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]).status.success());
    let o = run(&["report", "--results", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = fs::read_to_string(out.join("report/tiny_summary.csv")).unwrap();
    let row = summary.lines().nth(1).unwrap();
    assert!(row.starts_with("random,"));
    assert_eq!(row.split(',').nth(2), Some("1.000000"));
    assert!(out.join("report/bands.csv").exists());

    let o = run(&["report", "--results", tmp.path().join("missing").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

fn label_mean(csv: &Path) -> (f64, usize) {
    let mut rdr = csv::Reader::from_path(csv).unwrap();
    let idx = rdr.headers().unwrap().iter().position(|h| h == "label").unwrap();
    let mut n = 0;
    let mut pos = 0;
    for rec in rdr.records() {
        n += 1;
        pos += rec.unwrap()[idx].parse::<u32>().unwrap() as usize;
    }
    (pos as f64 / n as f64, n)
}

#[test]
fn synth_presets_match_their_positive_rate() {
    let tmp = TempDir::new().unwrap();
    for (preset, pi) in [("bank1-like", 1e-4), ("merchant-like", 1e-2)] {
        let p = tmp.path().join(format!("{preset}.csv"));
        let o = run(&["synth", "--preset", preset, "--out", p.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
        let (mean, n) = label_mean(&p);
        let sigma = (pi * (1.0 - pi) / n as f64).sqrt();
        assert!((mean - pi).abs() <= 3.0 * sigma, "{preset}: mean {mean} over {n} rows");
    }
}

#[test]
fn synth_is_reproducible_and_loads_back() {
    let tmp = TempDir::new().unwrap();
    let spec = tmp.path().join("spec.toml");
    fs::write(&spec, "positive_rate = 0.02\nevents_per_day = 300\nweeks = 8\nn_entities = 1000\n").unwrap();
    let a = tmp.path().join("a.csv");
    let b = tmp.path().join("b.csv");
    for p in [&a, &b] {
        let o = run(&["synth", "--spec", spec.to_str().unwrap(), "--seed", "4", "--out", p.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());

    // the written file drives a csv-sourced experiment
    let cfg = TINY.replace(
        "source = \"synth\"\npositive_rate = 0.05\nevents_per_day = 200\nn_entities = 500",
        "source = \"csv\"\npath = \"a.csv\"\n\n[dataset.schema]\ncategoricals = [\"cat_0\", \"cat_1\"]\nnumericals = [\"num_0\", \"num_1\", \"num_2\", \"num_3\", \"num_4\", \"num_5\"]",
    );
    let cfg = write_config(tmp.path(), &cfg);
    let o = run(&["run", "--config", cfg.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
}
