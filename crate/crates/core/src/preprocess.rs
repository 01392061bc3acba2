//! Day-one unsupervised preprocessing: entity profiles, ordinal + frequency
//! encoding of categoricals, standardization and PCA.
//!
//! A [`Pipeline`] is fitted once on the waiting-period sample and then only
//! ever read.

use alloc::collections::{BTreeMap, VecDeque};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{symmetric_eigen, Matrix};
use crate::math::sqrt;
use crate::pool::{EntityId, Event, FeatureVector, Profile};

const HOUR_MS: i64 = 3_600_000;
const DAY_MS: i64 = 24 * HOUR_MS;

/// Field names of a dataset. Also the CSV header contract.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemaSpec {
    #[serde(default = "default_event_id")]
    pub event_id: String,
    #[serde(default = "default_timestamp")]
    pub timestamp: String,
    #[serde(default = "default_entity")]
    pub entity: String,
    #[serde(default = "default_amount")]
    pub amount: String,
    #[serde(default = "default_label")]
    pub label: String,
    #[serde(default)]
    pub categoricals: Vec<String>,
    #[serde(default)]
    pub numericals: Vec<String>,
}

fn default_event_id() -> String {
    "event_id".into()
}
fn default_timestamp() -> String {
    "timestamp_ms".into()
}
fn default_entity() -> String {
    "entity_id".into()
}
fn default_amount() -> String {
    "amount".into()
}
fn default_label() -> String {
    "label".into()
}

impl SchemaSpec {
    /// The canonical layout: `event_id, timestamp_ms, entity_id, amount,
    /// cat_0..cat_m, num_0..num_p, label`.
    pub fn canonical(n_categorical: usize, n_numerical: usize) -> Self {
        Self {
            event_id: default_event_id(),
            timestamp: default_timestamp(),
            entity: default_entity(),
            amount: default_amount(),
            label: default_label(),
            categoricals: (0..n_categorical).map(|i| format!("cat_{i}")).collect(),
            numericals: (0..n_numerical).map(|i| format!("num_{i}")).collect(),
        }
    }

    /// Column names in canonical CSV order.
    pub fn columns(&self) -> Vec<&str> {
        let mut cols = Vec::with_capacity(5 + self.categoricals.len() + self.numericals.len());
        cols.push(self.event_id.as_str());
        cols.push(self.timestamp.as_str());
        cols.push(self.entity.as_str());
        cols.push(self.amount.as_str());
        cols.extend(self.categoricals.iter().map(String::as_str));
        cols.extend(self.numericals.iter().map(String::as_str));
        cols.push(self.label.as_str());
        cols
    }

    pub fn validate(&self) -> Result<(), PreprocessError> {
        if self.label.is_empty() || self.timestamp.is_empty() {
            return Err(PreprocessError::InvalidSchema("label and timestamp names are mandatory".into()));
        }
        let mut seen = BTreeMap::new();
        for name in self.columns() {
            if name.is_empty() {
                return Err(PreprocessError::InvalidSchema("empty field name".into()));
            }
            if seen.insert(name, ()).is_some() {
                return Err(PreprocessError::InvalidSchema(format!("field name `{name}` used twice")));
            }
        }
        Ok(())
    }

    /// Width of the encoded feature space before PCA.
    pub fn encoded_dim(&self) -> usize {
        1 + self.numericals.len() + Profile::WIDTH + 2 * self.categoricals.len()
    }
}

/// How many principal components to keep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PcaTarget {
    Components(usize),
    /// Smallest k whose cumulative explained variance reaches the fraction.
    VarianceFraction(f64),
}

impl Default for PcaTarget {
    fn default() -> Self {
        PcaTarget::Components(90)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum PreprocessError {
    #[error("cannot fit a pipeline on an empty sample")]
    EmptySample,
    #[error("requested {k} components but only {available} encoded features exist")]
    TooManyComponents { k: usize, available: usize },
    #[error("variance fraction {0} is outside (0, 1]")]
    InvalidVarianceFraction(f64),
    #[error("event {event} has {got} {kind} fields, schema declares {expected}")]
    ShapeMismatch { event: u64, kind: &'static str, expected: usize, got: usize },
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
}

/// Fills each event's sliding-window [`Profile`] (count and amount sum over
/// the trailing 1 h and 24 h, current event included). Events must be in
/// timestamp order.
pub fn annotate_profiles(events: &mut [Event]) {
    #[derive(Default)]
    struct Window {
        hour: VecDeque<(i64, f64)>,
        hour_sum: f64,
        day: VecDeque<(i64, f64)>,
        day_sum: f64,
    }
    let mut state: BTreeMap<EntityId, Window> = BTreeMap::new();
    for e in events.iter_mut() {
        let w = state.entry(e.entity_id).or_default();
        let t = e.timestamp;
        while let Some(&(ts, a)) = w.hour.front() {
            if ts > t - HOUR_MS {
                break;
            }
            w.hour.pop_front();
            w.hour_sum -= a;
        }
        while let Some(&(ts, a)) = w.day.front() {
            if ts > t - DAY_MS {
                break;
            }
            w.day.pop_front();
            w.day_sum -= a;
        }
        w.hour.push_back((t, e.amount));
        w.hour_sum += e.amount;
        w.day.push_back((t, e.amount));
        w.day_sum += e.amount;
        e.profile = Profile {
            count_1h: w.hour.len() as f64,
            amount_1h: w.hour_sum,
            count_24h: w.day.len() as f64,
            amount_24h: w.day_sum,
        };
    }
}

#[derive(Clone, Debug, PartialEq)]
struct CategoryEncoder {
    ordinal: BTreeMap<String, f64>,
    frequency: BTreeMap<String, f64>,
}

impl CategoryEncoder {
    fn fit<'a>(values: impl Iterator<Item = &'a str>) -> Self {
        let mut ordinal = BTreeMap::new();
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        let mut n = 0usize;
        for v in values {
            if !ordinal.contains_key(v) {
                let code = ordinal.len() as f64;
                ordinal.insert(String::from(v), code);
            }
            *counts.entry(String::from(v)).or_default() += 1;
            n += 1;
        }
        let frequency = counts.into_iter().map(|(k, c)| (k, c as f64 / n as f64)).collect();
        Self { ordinal, frequency }
    }

    /// Unseen values encode as ordinal -1, frequency 0.
    fn encode(&self, v: &str) -> (f64, f64) {
        (
            self.ordinal.get(v).copied().unwrap_or(-1.0),
            self.frequency.get(v).copied().unwrap_or(0.0),
        )
    }
}

/// A fitted, immutable preprocessing pipeline.
#[derive(Clone, Debug, PartialEq)]
pub struct Pipeline {
    n_numerical: usize,
    encoders: Vec<CategoryEncoder>,
    col_mean: Vec<f64>,
    col_std: Vec<f64>,
    pca_mean: Vec<f64>,
    /// k x d, orthonormal rows.
    components: Matrix,
    explained: Vec<f64>,
}

fn check_shape(e: &Event, schema: &SchemaSpec) -> Result<(), PreprocessError> {
    if e.categoricals.len() != schema.categoricals.len() {
        return Err(PreprocessError::ShapeMismatch {
            event: e.event_id.0,
            kind: "categorical",
            expected: schema.categoricals.len(),
            got: e.categoricals.len(),
        });
    }
    if e.numericals.len() != schema.numericals.len() {
        return Err(PreprocessError::ShapeMismatch {
            event: e.event_id.0,
            kind: "numerical",
            expected: schema.numericals.len(),
            got: e.numericals.len(),
        });
    }
    Ok(())
}

/// Fits encoders, standardization and PCA on `sample`.
pub fn fit_pipeline(sample: &[Event], schema: &SchemaSpec, target: PcaTarget) -> Result<Pipeline, PreprocessError> {
    if sample.is_empty() {
        return Err(PreprocessError::EmptySample);
    }
    for e in sample {
        check_shape(e, schema)?;
    }
    let d = schema.encoded_dim();
    match target {
        PcaTarget::Components(k) if k > d => return Err(PreprocessError::TooManyComponents { k, available: d }),
        PcaTarget::VarianceFraction(f) if !(f > 0.0 && f <= 1.0) => {
            return Err(PreprocessError::InvalidVarianceFraction(f))
        }
        _ => {}
    }

    let encoders: Vec<CategoryEncoder> = (0..schema.categoricals.len())
        .map(|c| CategoryEncoder::fit(sample.iter().map(|e| e.categoricals[c].as_str())))
        .collect();
    let mut pipeline = Pipeline {
        n_numerical: schema.numericals.len(),
        encoders,
        col_mean: Vec::new(),
        col_std: Vec::new(),
        pca_mean: Vec::new(),
        components: Matrix::zeros(0, d),
        explained: Vec::new(),
    };

    let n = sample.len();
    let mut encoded = Matrix::zeros(n, d);
    for (i, e) in sample.iter().enumerate() {
        pipeline.encode_into(e, encoded.row_mut(i));
    }

    let mut mean = alloc::vec![0.0; d];
    for r in encoded.iter_rows() {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut var = alloc::vec![0.0; d];
    for r in encoded.iter_rows() {
        for j in 0..d {
            let c = r[j] - mean[j];
            var[j] += c * c;
        }
    }
    let std: Vec<f64> = var
        .iter()
        .map(|v| {
            let s = sqrt(v / n as f64);
            if s > 1e-12 * (1.0 + s) && s.is_finite() && s > 0.0 {
                s
            } else {
                1.0
            }
        })
        .collect();
    pipeline.col_mean = mean;
    pipeline.col_std = std;

    let mut z = encoded;
    for i in 0..n {
        pipeline.standardize(z.row_mut(i));
    }

    let mut pca_mean = alloc::vec![0.0; d];
    for r in z.iter_rows() {
        for (m, v) in pca_mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    pca_mean.iter_mut().for_each(|m| *m /= n as f64);
    let denom = if n > 1 { (n - 1) as f64 } else { 1.0 };
    let mut cov = Matrix::zeros(d, d);
    let mut centered = alloc::vec![0.0; d];
    for r in z.iter_rows() {
        for j in 0..d {
            centered[j] = r[j] - pca_mean[j];
        }
        for a in 0..d {
            let ca = centered[a];
            if ca == 0.0 {
                continue;
            }
            for b in a..d {
                let v = cov.get(a, b) + ca * centered[b];
                cov.set(a, b, v);
            }
        }
    }
    for a in 0..d {
        for b in a..d {
            let v = cov.get(a, b) / denom;
            cov.set(a, b, v);
            cov.set(b, a, v);
        }
    }

    let (values, vectors) = symmetric_eigen(&cov);
    let positive: Vec<f64> = values.iter().map(|v| v.max(0.0)).collect();
    let total: f64 = positive.iter().sum();
    let fractions: Vec<f64> = positive
        .iter()
        .map(|v| if total > 0.0 { v / total } else { 0.0 })
        .collect();
    let k = match target {
        PcaTarget::Components(k) => k,
        PcaTarget::VarianceFraction(f) => {
            let mut acc = 0.0;
            let mut k = d;
            for (i, fr) in fractions.iter().enumerate() {
                acc += fr;
                if acc >= f - 1e-12 {
                    k = i + 1;
                    break;
                }
            }
            k
        }
    };
    let rows: Vec<usize> = (0..k).collect();
    pipeline.components = vectors.select_rows(&rows);
    pipeline.explained = fractions[..k].to_vec();
    pipeline.pca_mean = pca_mean;
    Ok(pipeline)
}

impl Pipeline {
    /// Number of output components.
    pub fn output_dim(&self) -> usize {
        self.components.rows()
    }

    /// Width of the encoded space before PCA.
    pub fn encoded_dim(&self) -> usize {
        self.components.cols()
    }

    pub fn explained_variance(&self) -> &[f64] {
        &self.explained
    }

    pub fn components(&self) -> &Matrix {
        &self.components
    }

    fn encode_into(&self, e: &Event, out: &mut [f64]) {
        let mut j = 0;
        out[j] = e.amount;
        j += 1;
        for (k, v) in e.numericals.iter().take(self.n_numerical).enumerate() {
            out[j + k] = *v;
        }
        j += self.n_numerical;
        for v in e.profile.as_array() {
            out[j] = v;
            j += 1;
        }
        for (enc, raw) in self.encoders.iter().zip(&e.categoricals) {
            let (o, f) = enc.encode(raw);
            out[j] = o;
            out[j + 1] = f;
            j += 2;
        }
    }

    fn standardize(&self, row: &mut [f64]) {
        for ((v, m), s) in row.iter_mut().zip(&self.col_mean).zip(&self.col_std) {
            *v = (*v - m) / s;
        }
    }

    /// Encoded and standardized columns, before projection.
    pub fn standardized(&self, e: &Event) -> Vec<f64> {
        let mut row = alloc::vec![0.0; self.encoded_dim()];
        self.encode_into(e, &mut row);
        self.standardize(&mut row);
        row
    }

    /// Projects standardized columns onto the principal components.
    pub fn project(&self, standardized: &[f64]) -> Vec<f64> {
        let centered: Vec<f64> = standardized.iter().zip(&self.pca_mean).map(|(v, m)| v - m).collect();
        self.components.iter_rows().map(|c| crate::math::dot(c, &centered)).collect()
    }

    /// Maps projected coordinates back to standardized space.
    pub fn reconstruct(&self, projected: &[f64]) -> Vec<f64> {
        let mut out = self.pca_mean.clone();
        for (c, y) in self.components.iter_rows().zip(projected) {
            for (o, v) in out.iter_mut().zip(c) {
                *o += y * v;
            }
        }
        out
    }

    pub fn transform(&self, e: &Event) -> FeatureVector {
        FeatureVector { event_id: e.event_id, values: self.project(&self.standardized(e)) }
    }

    pub fn transform_all(&self, events: &[Event]) -> Vec<FeatureVector> {
        events.iter().map(|e| self.transform(e)).collect()
    }
}
