//! Ranking tables, percentile bands and positives-boost tables built from a
//! results directory.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use coldstart_core::evaluation::{aggregate_bands, norm_area_p50, norm_final_p50, positives_boost_at, rank_policies, var_area};
use coldstart_core::math::{mean, median};
use coldstart_core::policies::Stage;
use coldstart_core::simulation::{IterationRecord, LearningCurve};
use thiserror::Error;

use crate::output::{csv_bytes, write_atomic};
use crate::runner::{BaselineRow, RecordLine};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("no curve files under {0}")]
    NoResults(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io { path: path.display().to_string(), source }
}

/// Curves by (dataset, fold, sequence), one per seed in seed order.
pub type CurveTable = BTreeMap<(String, usize, String), BTreeMap<u64, LearningCurve>>;

fn parse_stage(s: &str) -> Option<Stage> {
    match s {
        "cold" => Some(Stage::Cold),
        "warmup" => Some(Stage::Warmup),
        "hot" => Some(Stage::Hot),
        _ => None,
    }
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), ReportError> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io_err(dir))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()
        .map_err(io_err(dir))?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect_files(&p, out)?;
        } else if p.extension().is_some_and(|e| e == "jsonl") {
            out.push(p);
        }
    }
    Ok(())
}

pub fn load_curves(results: &Path) -> Result<CurveTable, ReportError> {
    let dir = results.join("curves");
    let mut files = Vec::new();
    if dir.is_dir() {
        collect_files(&dir, &mut files)?;
    }
    if files.is_empty() {
        return Err(ReportError::NoResults(results.display().to_string()));
    }
    let mut table = CurveTable::new();
    for f in files {
        let text = std::fs::read_to_string(&f).map_err(io_err(&f))?;
        let mut key = None;
        let mut curve = LearningCurve::default();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let perr = |message: String| ReportError::Parse { path: f.display().to_string(), message };
            let r: RecordLine = serde_json::from_str(line).map_err(|e| perr(format!("line {}: {e}", i + 1)))?;
            let stage = parse_stage(&r.stage).ok_or_else(|| perr(format!("line {}: unknown stage `{}`", i + 1, r.stage)))?;
            key.get_or_insert_with(|| ((r.dataset.clone(), r.fold, r.sequence.clone()), r.seed));
            curve.records.push(IterationRecord {
                iteration: r.iteration,
                sim_time_ms: r.sim_time_ms,
                n_labeled: r.n_labeled,
                n_positives: r.n_positives,
                stage,
                checkpoint: r.checkpoint,
                metric: r.metric_value,
            });
        }
        curve.label_reveals = curve.records.last().map_or(0, |r| r.n_labeled as u64);
        if let Some((k, seed)) = key {
            table.entry(k).or_default().insert(seed, curve);
        }
    }
    Ok(table)
}

pub fn load_baselines(results: &Path) -> Result<Vec<BaselineRow>, ReportError> {
    let p = results.join("baselines.csv");
    if !p.exists() {
        return Ok(Vec::new());
    }
    let mut rdr = csv::Reader::from_path(&p).map_err(|e| ReportError::Parse { path: p.display().to_string(), message: e.to_string() })?;
    rdr.deserialize()
        .collect::<Result<Vec<BaselineRow>, _>>()
        .map_err(|e| ReportError::Parse { path: p.display().to_string(), message: e.to_string() })
}

/// Per-fold statistics of one sequence.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FoldStats {
    pub norm_area_p50: f64,
    pub var_area: f64,
    pub norm_final_p50: f64,
}

#[derive(Clone, Debug, Default)]
pub struct Report {
    /// dataset -> sequence -> fold -> stats
    pub stats: BTreeMap<String, BTreeMap<String, BTreeMap<usize, FoldStats>>>,
    /// dataset -> fold -> sequence -> rank
    pub ranks: BTreeMap<String, BTreeMap<usize, BTreeMap<String, f64>>>,
    pub gaps: Vec<String>,
}

fn fmt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| format!("{x:.6}"))
}

/// Builds all tables under `out`. Missing folds or baselines leave empty
/// cells and are listed in the returned gaps.
pub fn build_report(results: &Path, out: &Path) -> Result<Report, ReportError> {
    let curves = load_curves(results)?;
    let baselines = load_baselines(results)?;
    let mut base: BTreeMap<(String, usize), Vec<f64>> = BTreeMap::new();
    for b in &baselines {
        base.entry((b.dataset.clone(), b.fold)).or_default().push(b.test_metric);
    }
    let mut report = Report::default();
    let mut folds: BTreeMap<String, BTreeSet<usize>> = BTreeMap::new();
    let mut sequences: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for (d, f, s) in curves.keys() {
        folds.entry(d.clone()).or_default().insert(*f);
        sequences.entry(d.clone()).or_default().insert(s.clone());
    }

    let mut band_rows = Vec::new();
    for ((d, f, s), by_seed) in &curves {
        let cs: Vec<LearningCurve> = by_seed.values().cloned().collect();
        let Ok(bands) = aggregate_bands(&cs) else { continue };
        for i in 0..bands.len() {
            let labeled: Vec<f64> = cs.iter().filter_map(|c| c.records.get(i)).map(|r| r.n_labeled as f64).collect();
            let pos: Vec<f64> = cs.iter().filter_map(|c| c.records.get(i)).map(|r| r.n_positives as f64).collect();
            band_rows.push(vec![
                d.clone(),
                f.to_string(),
                s.clone(),
                i.to_string(),
                fmt(Some(bands.p10[i])),
                fmt(Some(bands.p50[i])),
                fmt(Some(bands.p90[i])),
                fmt(Some(median(&labeled))),
                fmt(Some(median(&pos))),
            ]);
        }
        let Some(b) = base.get(&(d.clone(), *f)).map(|v| median(v)).filter(|b| *b > 0.0) else {
            report.gaps.push(format!("{d} fold {f}: no positive baseline, {s} not normalized"));
            continue;
        };
        let finals: Vec<f64> = cs.iter().filter_map(LearningCurve::final_metric).collect();
        let (Ok(a), Ok(v), Ok(fin)) = (norm_area_p50(&bands, b), var_area(&bands, b), norm_final_p50(&finals, b)) else {
            report.gaps.push(format!("{d} fold {f}: {s} has empty curves"));
            continue;
        };
        report
            .stats
            .entry(d.clone())
            .or_default()
            .entry(s.clone())
            .or_default()
            .insert(*f, FoldStats { norm_area_p50: a, var_area: v, norm_final_p50: fin });
    }

    for (d, seqs) in &sequences {
        let stats = report.stats.get(d).cloned().unwrap_or_default();
        for f in &folds[d] {
            let present: Vec<(&String, f64)> =
                seqs.iter().filter_map(|s| stats.get(s).and_then(|m| m.get(f)).map(|st| (s, st.norm_area_p50))).collect();
            for s in seqs {
                if !stats.get(s).is_some_and(|m| m.contains_key(f)) {
                    report.gaps.push(format!("{d} fold {f}: missing {s}"));
                }
            }
            let r = rank_policies(&present.iter().map(|p| p.1).collect::<Vec<_>>());
            let entry = report.ranks.entry(d.clone()).or_default().entry(*f).or_default();
            for ((s, _), rank) in present.iter().zip(r) {
                entry.insert((*s).clone(), rank);
            }
        }
    }
    report.gaps.sort();
    report.gaps.dedup();

    let w = |name: &str, bytes: Vec<u8>| -> Result<(), ReportError> {
        let p = out.join(name);
        write_atomic(&p, &bytes).map_err(io_err(&p))
    };

    let mut overall: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    for (d, seqs) in &sequences {
        let fs: Vec<usize> = folds[d].iter().copied().collect();
        let mut header = vec![String::from("sequence")];
        for f in &fs {
            header.extend([format!("fold{f}_norm_area_p50"), format!("fold{f}_rank"), format!("fold{f}_norm_final_p50")]);
        }
        header.extend([String::from("avg_rank"), String::from("avg_var")]);
        let mut rows = Vec::new();
        for s in seqs {
            let st = report.stats.get(d).and_then(|m| m.get(s));
            let mut row = vec![s.clone()];
            let mut ranks = Vec::new();
            let mut vars = Vec::new();
            for f in &fs {
                let x = st.and_then(|m| m.get(f));
                let rank = report.ranks.get(d).and_then(|m| m.get(f)).and_then(|m| m.get(s)).copied();
                ranks.extend(rank);
                vars.extend(x.map(|x| x.var_area));
                row.extend([fmt(x.map(|x| x.norm_area_p50)), fmt(rank), fmt(x.map(|x| x.norm_final_p50))]);
            }
            let avg = (!ranks.is_empty()).then(|| mean(&ranks));
            if let Some(a) = avg {
                overall.entry(s.clone()).or_default().insert(d.clone(), a);
            }
            row.extend([fmt(avg), fmt((!vars.is_empty()).then(|| mean(&vars)))]);
            rows.push(row);
        }
        let h: Vec<&str> = header.iter().map(String::as_str).collect();
        w(&format!("{d}_summary.csv"), csv_bytes(&h, rows))?;
    }

    let datasets: Vec<&String> = sequences.keys().collect();
    let mut header = vec![String::from("sequence")];
    header.extend(datasets.iter().map(|d| format!("{d}_avg_rank")));
    header.push(String::from("avg"));
    let rows = overall.iter().map(|(s, by_d)| {
        let mut row = vec![s.clone()];
        row.extend(datasets.iter().map(|d| fmt(by_d.get(*d).copied())));
        row.push(fmt(Some(mean(&by_d.values().copied().collect::<Vec<_>>()))));
        row
    });
    let h: Vec<&str> = header.iter().map(String::as_str).collect();
    w("overall.csv", csv_bytes(&h, rows))?;

    let mut boost_rows = Vec::new();
    for ((d, f, s3), c3) in &curves {
        let parts: Vec<&str> = s3.split('>').collect();
        if parts.len() != 3 {
            continue;
        }
        let s2 = format!("{}>{}", parts[0], parts[2]);
        let Some(c2) = curves.get(&(d.clone(), *f, s2.clone())) else { continue };
        let c3: Vec<LearningCurve> = c3.values().cloned().collect();
        let c2: Vec<LearningCurve> = c2.values().cloned().collect();
        let len = c3.iter().chain(&c2).map(|c| c.records.len()).min().unwrap_or(0);
        for i in 0..len {
            let b = positives_boost_at(&c3, &c2, i);
            boost_rows.push(vec![d.clone(), f.to_string(), s3.clone(), s2.clone(), i.to_string(), fmt(b)]);
        }
    }
    w("positives_boost.csv", csv_bytes(&["dataset", "fold", "three_stage", "two_stage", "iteration", "boost"], boost_rows))?;
    w(
        "bands.csv",
        csv_bytes(&["dataset", "fold", "sequence", "iteration", "p10", "p50", "p90", "n_labeled_p50", "n_positives_p50"], band_rows),
    )?;
    w("gaps.txt", report.gaps.iter().map(|g| format!("{g}\n")).collect::<String>().into_bytes())?;
    Ok(report)
}
