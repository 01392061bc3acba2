//! Temporal fold slicing, entity-preserving undersampling and the synthetic
//! imbalanced event stream.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::vec::Vec;

use rand::Rng as _;
use rand_distr::{Distribution, LogNormal, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::sqrt;
use crate::oracle::{Label, Oracle};
use crate::pool::{EntityId, Event, EventId};
use crate::rng;

pub const DAY_MS: i64 = 86_400_000;
pub const WEEK_MS: i64 = 7 * DAY_MS;

#[derive(Debug, Error, PartialEq)]
pub enum DataError {
    #[error("data spans {available_days} days but {needed_weeks} weeks are needed")]
    InsufficientSpan { needed_weeks: i64, available_days: i64 },
    #[error("no events")]
    Empty,
    #[error("sampling rate must lie in (0, 1], got {0}")]
    InvalidRate(f64),
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(&'static str),
}

/// Four weeks of training stream followed by four weeks of test events.
#[derive(Clone, Debug)]
pub struct FoldData {
    pub index: usize,
    /// First millisecond of the fold (midnight).
    pub start_ms: i64,
    pub train: Vec<Event>,
    pub test: Vec<Event>,
}

impl FoldData {
    pub fn train_end_ms(&self) -> i64 {
        self.start_ms + 4 * WEEK_MS
    }

    pub fn test_end_ms(&self) -> i64 {
        self.start_ms + 8 * WEEK_MS
    }
}

fn floor_day(ts: i64) -> i64 {
    ts.div_euclid(DAY_MS) * DAY_MS
}

/// Fold `i` starts `i * stride_weeks` after midnight of the first event.
/// `events` must be sorted by timestamp.
pub fn slice_folds(events: &[Event], n_folds: usize, stride_weeks: u32) -> Result<Vec<FoldData>, DataError> {
    let (Some(first), Some(last)) = (events.first(), events.last()) else {
        return Err(DataError::Empty);
    };
    let start = floor_day(first.timestamp);
    let available = floor_day(last.timestamp) + DAY_MS - start;
    let needed_weeks = 8 + (n_folds.max(1) as i64 - 1) * stride_weeks as i64;
    if available < needed_weeks * WEEK_MS {
        return Err(DataError::InsufficientSpan { needed_weeks, available_days: available / DAY_MS });
    }
    Ok((0..n_folds)
        .map(|i| {
            let s = start + i as i64 * stride_weeks as i64 * WEEK_MS;
            let in_range = |lo: i64, hi: i64| -> Vec<Event> {
                let a = events.partition_point(|e| e.timestamp < lo);
                let b = events.partition_point(|e| e.timestamp < hi);
                events[a..b].to_vec()
            };
            FoldData { index: i, start_ms: s, train: in_range(s, s + 4 * WEEK_MS), test: in_range(s + 4 * WEEK_MS, s + 8 * WEEK_MS) }
        })
        .collect())
}

/// Samples fraudulent entities (at least one positive event) and clean
/// entities separately at `rate`, keeping every event of a sampled entity.
pub fn undersample_entities(events: &[Event], rate: f64, seed: u64) -> Result<Vec<Event>, DataError> {
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(DataError::InvalidRate(rate));
    }
    let mut oracle = Oracle::new();
    let mut fraud: BTreeSet<EntityId> = BTreeSet::new();
    let mut all: BTreeSet<EntityId> = BTreeSet::new();
    for e in events {
        all.insert(e.entity_id);
        if oracle.label(e).is_positive() {
            fraud.insert(e.entity_id);
        }
    }
    let mut fraud_rng = rng::derived_stream(seed, &[1]);
    let mut clean_rng = rng::derived_stream(seed, &[0]);
    let mut keep: BTreeMap<EntityId, bool> = BTreeMap::new();
    for id in all {
        let r = if fraud.contains(&id) { &mut fraud_rng } else { &mut clean_rng };
        keep.insert(id, rate >= 1.0 || r.random::<f64>() < rate);
    }
    Ok(events.iter().filter(|e| keep[&e.entity_id]).cloned().collect())
}

/// Parameters of the synthetic stream. Each class is a two-component
/// Gaussian mixture over the numerical fields; positive components sit
/// `separation` standard deviations away from the negative ones.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub positive_rate: f64,
    pub events_per_day: usize,
    pub n_entities: u64,
    /// Average number of positive events per fraudulent entity.
    pub frauds_per_entity: f64,
    pub n_numericals: usize,
    pub n_categoricals: usize,
    pub category_cardinality: usize,
    pub separation: f64,
    /// Mean shift of every numerical field per week.
    pub drift_per_week: f64,
    pub weeks: u32,
    pub start_ms: i64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            positive_rate: 5e-3,
            events_per_day: 2000,
            n_entities: 20_000,
            frauds_per_entity: 3.0,
            n_numericals: 6,
            n_categoricals: 2,
            category_cardinality: 10,
            separation: 3.0,
            drift_per_week: 0.0,
            weeks: 8,
            start_ms: 1_577_836_800_000,
            seed: 0,
        }
    }
}

impl SynthSpec {
    /// Order-of-magnitude stand-ins for the benchmark datasets.
    pub fn preset(name: &str) -> Option<Self> {
        let base = Self::default();
        Some(match name {
            "bank1-like" => Self { positive_rate: 1e-4, events_per_day: 5000, ..base },
            "bank2-like" => Self { positive_rate: 1e-3, ..base },
            "payment-processor-like" => Self { positive_rate: 1e-2, drift_per_week: 0.05, ..base },
            "merchant-like" => Self { positive_rate: 1e-2, n_categoricals: 3, ..base },
            _ => return None,
        })
    }

    pub const PRESETS: [&'static str; 4] = ["bank1-like", "bank2-like", "payment-processor-like", "merchant-like"];

    pub fn validate(&self) -> Result<(), DataError> {
        if !(self.positive_rate > 0.0 && self.positive_rate < 1.0) {
            return Err(DataError::InvalidSpec("positive_rate must lie in (0, 1)"));
        }
        if self.events_per_day == 0 || self.weeks == 0 {
            return Err(DataError::InvalidSpec("events_per_day and weeks must be positive"));
        }
        if self.n_entities == 0 || !(self.frauds_per_entity >= 1.0) {
            return Err(DataError::InvalidSpec("n_entities must be positive and frauds_per_entity at least 1"));
        }
        if self.n_categoricals > 0 && self.category_cardinality < 2 {
            return Err(DataError::InvalidSpec("category_cardinality must be at least 2"));
        }
        if !self.separation.is_finite() || !self.drift_per_week.is_finite() {
            return Err(DataError::InvalidSpec("separation and drift must be finite"));
        }
        Ok(())
    }

    /// Expected positives over the whole stream.
    pub fn expected_positives(&self) -> f64 {
        self.positive_rate * self.events_per_day as f64 * 7.0 * self.weeks as f64
    }
}

#[derive(Clone, Debug)]
pub struct SynthStream {
    pub events: Vec<Event>,
    /// Fewer than one positive is expected, so folds may hold none.
    pub sparse_positives: bool,
}

fn unit_vector(r: &mut rng::Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(r)).collect();
        let n = sqrt(v.iter().map(|x| x * x).sum());
        if n > 1e-9 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Deterministic stream for `spec`, sorted by timestamp.
pub fn synth_generate(spec: &SynthSpec) -> Result<SynthStream, DataError> {
    spec.validate()?;
    let mut r = rng::stream(spec.seed);
    let d = spec.n_numericals;
    let neg_centers: Vec<Vec<f64>> = (0..2)
        .map(|_| (0..d).map(|_| { let z: f64 = StandardNormal.sample(&mut r); 1.5 * z }).collect())
        .collect();
    let pos_centers: Vec<Vec<f64>> = neg_centers
        .iter()
        .map(|c| {
            let u = unit_vector(&mut r, d);
            c.iter().zip(u).map(|(a, b)| a + spec.separation * b).collect()
        })
        .collect();
    // negatives favour low category codes, positives high ones
    let k = spec.category_cardinality.max(1);
    let neg_weights: Vec<f64> = (0..k).map(|i| 1.0 / (i + 1) as f64).collect();
    let pos_weights: Vec<f64> = (0..k).map(|i| 1.0 / (k - i) as f64).collect();
    let pick = |r: &mut rng::Rng, w: &[f64]| -> usize {
        let total: f64 = w.iter().sum();
        let mut u = r.random::<f64>() * total;
        for (i, wi) in w.iter().enumerate() {
            if u < *wi {
                return i;
            }
            u -= wi;
        }
        w.len() - 1
    };
    let neg_amount = LogNormal::new(3.5, 1.0).map_err(|_| DataError::InvalidSpec("amount distribution"))?;
    let pos_amount = LogNormal::new(3.5 + 0.25 * spec.separation, 1.0).map_err(|_| DataError::InvalidSpec("amount distribution"))?;
    let unit = Normal::new(0.0, 1.0).map_err(|_| DataError::InvalidSpec("feature distribution"))?;
    let n_fraud_entities = ((spec.expected_positives() / spec.frauds_per_entity).ceil() as u64).max(1);

    let days = spec.weeks as i64 * 7;
    let mut events = Vec::with_capacity(spec.events_per_day * days as usize);
    let mut next_id = 0u64;
    for day in 0..days {
        let day_start = spec.start_ms + day * DAY_MS;
        let shift = spec.drift_per_week * (day / 7) as f64;
        let mut stamps: Vec<i64> = (0..spec.events_per_day).map(|_| day_start + r.random_range(0..DAY_MS)).collect();
        stamps.sort_unstable();
        for ts in stamps {
            let positive = r.random::<f64>() < spec.positive_rate;
            let centers = if positive { &pos_centers } else { &neg_centers };
            let c = &centers[r.random_range(0..2)];
            let numericals: Vec<f64> = c.iter().map(|m| m + shift + unit.sample(&mut r)).collect();
            let w = if positive { &pos_weights } else { &neg_weights };
            let categoricals = (0..spec.n_categoricals).map(|j| format!("c{j}_{}", pick(&mut r, w))).collect();
            let entity = if positive {
                spec.n_entities + r.random_range(0..n_fraud_entities)
            } else {
                r.random_range(0..spec.n_entities)
            };
            let amount = if positive { pos_amount.sample(&mut r) } else { neg_amount.sample(&mut r) };
            events.push(Event::new(
                EventId(next_id),
                ts,
                EntityId(entity),
                (amount * 100.0_f64).round() / 100.0,
                categoricals,
                numericals,
                Label::from(positive),
            ));
            next_id += 1;
        }
    }
    Ok(SynthStream { events, sparse_positives: spec.expected_positives() < 1.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn at(id: u64, ts: i64, entity: u64, label: Label) -> Event {
        Event::new(EventId(id), ts, EntityId(entity), 1.0, vec![], vec![], label)
    }

    fn daily(weeks: i64) -> Vec<Event> {
        (0..weeks * 7).map(|d| at(d as u64, d * DAY_MS + 3_600_000, 0, Label::Negative)).collect()
    }

    #[test]
    fn single_fold_covers_eight_weeks() {
        let ev = daily(8);
        let f = slice_folds(&ev, 1, 4).unwrap();
        assert_eq!(f.len(), 1);
        assert_eq!((f[0].train.len(), f[0].test.len()), (28, 28));
        assert!(f[0].train.last().unwrap().timestamp < f[0].test[0].timestamp);
    }

    #[test]
    fn folds_start_every_stride() {
        let ev = daily(16);
        let f = slice_folds(&ev, 3, 4).unwrap();
        let starts: Vec<i64> = f.iter().map(|x| x.start_ms / WEEK_MS).collect();
        assert_eq!(starts, vec![0, 4, 8]);
        for fold in &f {
            assert!(fold.train.iter().all(|e| e.timestamp >= fold.start_ms && e.timestamp < fold.train_end_ms()));
            assert!(fold.test.iter().all(|e| e.timestamp >= fold.train_end_ms() && e.timestamp < fold.test_end_ms()));
        }
    }

    #[test]
    fn insufficient_span() {
        let ev = daily(10);
        assert_eq!(
            slice_folds(&ev, 2, 4).unwrap_err(),
            DataError::InsufficientSpan { needed_weeks: 12, available_days: 70 }
        );
        assert_eq!(slice_folds(&[], 1, 4).unwrap_err(), DataError::Empty);
    }

    #[test]
    fn full_rate_is_identity() {
        let ev: Vec<Event> = (0..50).map(|i| at(i, i as i64, i % 7, Label::from(i % 13 == 0))).collect();
        let out = undersample_entities(&ev, 1.0, 3).unwrap();
        assert_eq!(out.iter().map(|e| e.event_id).collect::<Vec<_>>(), ev.iter().map(|e| e.event_id).collect::<Vec<_>>());
        assert_eq!(undersample_entities(&ev, 0.0, 3).unwrap_err(), DataError::InvalidRate(0.0));
    }

    #[test]
    fn undersampling_keeps_whole_entities_at_binomial_rates() {
        // 100 fraud entities (one positive among three events), 10^4 clean ones
        let mut ev = Vec::new();
        let mut id = 0;
        for ent in 0..10_100u64 {
            for j in 0..3 {
                let label = Label::from(ent < 100 && j == 0);
                ev.push(at(id, id as i64, ent, label));
                id += 1;
            }
        }
        let base_rate = 100.0 / ev.len() as f64;
        for seed in 0..30 {
            let out = undersample_entities(&ev, 0.5, seed).unwrap();
            let mut per: BTreeMap<u64, usize> = BTreeMap::new();
            for e in &out {
                *per.entry(e.entity_id.0).or_default() += 1;
            }
            assert!(per.values().all(|&c| c == 3));
            let fraud = per.keys().filter(|&&k| k < 100).count() as f64;
            let clean = per.len() as f64 - fraud;
            assert!((fraud - 50.0).abs() <= 3.0 * 5.0);
            assert!((clean - 5000.0).abs() <= 3.0 * 50.0);
            let pos_rate = fraud / out.len() as f64;
            // dominated by the fraud-entity count: sd(F) = 5 over ~3 * 5050 events
            let sd = 5.0 / (3.0 * 5050.0);
            assert!((pos_rate - base_rate).abs() <= 3.0 * sd, "seed {seed}: {pos_rate}");
        }
    }

    #[test]
    fn synth_is_deterministic_and_ordered() {
        let spec = SynthSpec { weeks: 1, events_per_day: 300, ..SynthSpec::default() };
        let a = synth_generate(&spec).unwrap();
        let b = synth_generate(&spec).unwrap();
        assert_eq!(a.events.len(), 2100);
        assert!(a.events.windows(2).all(|w| w[0].timestamp <= w[1].timestamp));
        for (x, y) in a.events.iter().zip(&b.events) {
            assert_eq!(format!("{x:?}"), format!("{y:?}"));
            assert_eq!((x.timestamp, x.entity_id, &x.numericals), (y.timestamp, y.entity_id, &y.numericals));
        }
    }

    #[test]
    fn synth_positive_count_is_binomial() {
        let spec = SynthSpec { positive_rate: 1e-3, events_per_day: 10_000, weeks: 1, n_numericals: 2, ..SynthSpec::default() };
        let s = synth_generate(&spec).unwrap();
        let mut oracle = Oracle::new();
        let pos = s.events.iter().filter(|e| oracle.label(e).is_positive()).count() as f64;
        let n = s.events.len() as f64;
        let mu = n * 1e-3;
        assert!((pos - mu).abs() <= 3.0 * sqrt(mu * (1.0 - 1e-3)), "{pos}");
        assert!(!s.sparse_positives);
    }

    #[test]
    fn synth_flags_sparse_positives() {
        let spec = SynthSpec { positive_rate: 1e-5, events_per_day: 100, weeks: 1, ..SynthSpec::default() };
        assert!(synth_generate(&spec).unwrap().sparse_positives);
        assert!(synth_generate(&SynthSpec { positive_rate: 1.5, ..spec }).is_err());
    }

    #[test]
    fn presets_exist() {
        for p in SynthSpec::PRESETS {
            SynthSpec::preset(p).unwrap().validate().unwrap();
        }
        assert!(SynthSpec::preset("nope").is_none());
        assert_eq!(SynthSpec::preset("bank1-like").unwrap().positive_rate, 1e-4);
    }
}
