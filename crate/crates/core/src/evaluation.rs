//! Learning-curve metrics: recall at a fixed false positive rate, percentile
//! bands over seeds, baseline-normalized areas, rankings and the positives
//! boost of warm-up stages.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::{mean, median, percentile_sorted};
use crate::oracle::Label;
use crate::simulation::LearningCurve;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("labels contain a single class")]
    SingleClass,
    #[error("alpha must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),
    #[error("scores and labels differ in length ({scores} vs {labels})")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("no curves to aggregate")]
    Empty,
    #[error("baseline value must be positive, got {0}")]
    NonPositiveBaseline(f64),
    #[error("policies do not share the same folds")]
    MissingFold,
}

/// TPR at the smallest threshold whose FPR is at most `alpha`; an instance is
/// predicted positive when its score is strictly above the threshold.
pub fn recall_at_fpr(scores: &[f64], labels: &[Label], alpha: f64) -> Result<f64, EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch { scores: scores.len(), labels: labels.len() });
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(EvalError::InvalidAlpha(alpha));
    }
    let mut neg: Vec<f64> = Vec::new();
    let mut pos: Vec<f64> = Vec::new();
    for (&s, l) in scores.iter().zip(labels) {
        if l.is_positive() { pos.push(s) } else { neg.push(s) }
    }
    if neg.is_empty() || pos.is_empty() {
        return Err(EvalError::SingleClass);
    }
    neg.sort_by(|a, b| b.total_cmp(a));
    let n_neg = neg.len();
    // largest number of false positives allowed
    let mut k = 0;
    while k < n_neg && ((k + 1) as f64 / n_neg as f64) <= alpha {
        k += 1;
    }
    // #neg above t <= k  <=>  t >= neg[k]; neg[k] is itself a score value
    let threshold = if k < n_neg {
        neg[k]
    } else {
        scores.iter().copied().fold(f64::INFINITY, f64::min)
    };
    let tp = pos.iter().filter(|&&s| s > threshold).count();
    Ok(tp as f64 / pos.len() as f64)
}

/// Per-iteration P10/P50/P90 over seeds.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CurveBands {
    pub p10: Vec<f64>,
    pub p50: Vec<f64>,
    pub p90: Vec<f64>,
    pub n_seeds: usize,
    /// Curves that were longer than the common prefix and got cut.
    pub truncated: usize,
}

impl CurveBands {
    pub fn len(&self) -> usize {
        self.p50.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p50.is_empty()
    }
}

/// Bands over raw series, aligned to the shortest one.
pub fn bands_from_series(series: &[Vec<f64>]) -> Result<CurveBands, EvalError> {
    if series.is_empty() {
        return Err(EvalError::Empty);
    }
    let len = series.iter().map(Vec::len).min().unwrap_or(0);
    let truncated = series.iter().filter(|s| s.len() > len).count();
    let mut bands = CurveBands {
        p10: Vec::with_capacity(len),
        p50: Vec::with_capacity(len),
        p90: Vec::with_capacity(len),
        n_seeds: series.len(),
        truncated,
    };
    let mut col = Vec::with_capacity(series.len());
    for i in 0..len {
        col.clear();
        col.extend(series.iter().map(|s| s[i]));
        col.sort_by(f64::total_cmp);
        bands.p10.push(percentile_sorted(&col, 0.1));
        bands.p50.push(percentile_sorted(&col, 0.5));
        bands.p90.push(percentile_sorted(&col, 0.9));
    }
    Ok(bands)
}

/// Bands of the metric values. Iterations without a metric count as 0.
pub fn aggregate_bands(curves: &[LearningCurve]) -> Result<CurveBands, EvalError> {
    let series: Vec<Vec<f64>> = curves.iter().map(LearningCurve::metric_series).collect();
    bands_from_series(&series)
}

/// Trapezoidal area over the iteration index, divided by the axis length.
/// A single point is its own mean.
fn mean_trapezoid(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        n => {
            let area: f64 = values.windows(2).map(|w| 0.5 * (w[0] + w[1])).sum();
            area / (n - 1) as f64
        }
    }
}

fn check_baseline(b: f64) -> Result<(), EvalError> {
    if b > 0.0 && b.is_finite() { Ok(()) } else { Err(EvalError::NonPositiveBaseline(b)) }
}

pub fn norm_area_p50(bands: &CurveBands, baseline_median: f64) -> Result<f64, EvalError> {
    check_baseline(baseline_median)?;
    if bands.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(mean_trapezoid(&bands.p50) / baseline_median)
}

pub fn var_area(bands: &CurveBands, baseline_median: f64) -> Result<f64, EvalError> {
    check_baseline(baseline_median)?;
    if bands.is_empty() {
        return Err(EvalError::Empty);
    }
    let gap: Vec<f64> = bands.p90.iter().zip(&bands.p10).map(|(h, l)| h - l).collect();
    Ok(mean_trapezoid(&gap) / baseline_median)
}

/// Median over seeds of each curve's last metric value, not clamped.
pub fn norm_final_p50(finals: &[f64], baseline_median: f64) -> Result<f64, EvalError> {
    check_baseline(baseline_median)?;
    if finals.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(median(finals) / baseline_median)
}

/// Rank 1 is the highest value; tied values share the mean of their ranks.
pub fn rank_policies(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Mean over folds (or datasets) of per-policy ranks; `ranks[f][p]`.
pub fn avg_rank(ranks: &[Vec<f64>]) -> Result<Vec<f64>, EvalError> {
    let Some(first) = ranks.first() else {
        return Err(EvalError::Empty);
    };
    if ranks.iter().any(|r| r.len() != first.len()) {
        return Err(EvalError::MissingFold);
    }
    Ok((0..first.len())
        .map(|p| ranks.iter().map(|r| r[p]).sum::<f64>() / ranks.len() as f64)
        .collect())
}

/// `(P10(pos3) - P10(pos2)) / mean(pos2)`; `None` when `pos2` averages 0.
pub fn positives_boost(pos3: &[f64], pos2: &[f64]) -> Option<f64> {
    if pos3.is_empty() || pos2.is_empty() {
        return None;
    }
    let m = mean(pos2);
    if m == 0.0 {
        return None;
    }
    let mut a = pos3.to_vec();
    let mut b = pos2.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    Some((percentile_sorted(&a, 0.1) - percentile_sorted(&b, 0.1)) / m)
}

/// Boost read off the positive counts at `iteration` of each curve set.
/// Curves that end before `iteration` are skipped.
pub fn positives_boost_at(curves3: &[LearningCurve], curves2: &[LearningCurve], iteration: usize) -> Option<f64> {
    let pick = |cs: &[LearningCurve]| -> Vec<f64> {
        cs.iter()
            .filter_map(|c| c.records.get(iteration).map(|r| r.n_positives as f64))
            .collect()
    };
    positives_boost(&pick(curves3), &pick(curves2))
}

/// Table row for one policy sequence.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PolicySummary {
    pub sequence: alloc::string::String,
    pub norm_area_p50: Vec<f64>,
    pub var_area: Vec<f64>,
    pub norm_final_p50: Vec<f64>,
    pub fold_ranks: Vec<f64>,
    pub avg_rank: f64,
    pub avg_var: f64,
}

/// Builds one summary per policy from per-fold `(norm_area_p50, var_area,
/// norm_final_p50)` triples, `per_fold[p][f]`.
pub fn summarize(names: &[&str], per_fold: &[Vec<(f64, f64, f64)>]) -> Result<Vec<PolicySummary>, EvalError> {
    let n_folds = per_fold.first().map(Vec::len).ok_or(EvalError::Empty)?;
    if per_fold.iter().any(|p| p.len() != n_folds) || names.len() != per_fold.len() {
        return Err(EvalError::MissingFold);
    }
    let fold_ranks: Vec<Vec<f64>> = (0..n_folds)
        .map(|f| rank_policies(&per_fold.iter().map(|p| p[f].0).collect::<Vec<_>>()))
        .collect();
    let avg = avg_rank(&fold_ranks)?;
    Ok(names
        .iter()
        .zip(per_fold)
        .enumerate()
        .map(|(p, (name, folds))| PolicySummary {
            sequence: (*name).into(),
            norm_area_p50: folds.iter().map(|t| t.0).collect(),
            var_area: folds.iter().map(|t| t.1).collect(),
            norm_final_p50: folds.iter().map(|t| t.2).collect(),
            fold_ranks: fold_ranks.iter().map(|r| r[p]).collect(),
            avg_rank: avg[p],
            avg_var: mean(&folds.iter().map(|t| t.1).collect::<Vec<_>>()),
        })
        .collect())
}
