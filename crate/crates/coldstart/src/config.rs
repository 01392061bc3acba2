//! Experiment configuration (TOML).
//!
//! ```toml
//! name = "synthetic"          # dataset label used in outputs
//! seeds = 35
//! sequences = ["random", "random>odal>unc_entropy"]   # default: all registered
//! out_dir = "results"         # optional, --out overrides
//!
//! [dataset]
//! source = "synth"            # or "csv"
//! preset = "bank2-like"       # synth only; fields below override it
//! positive_rate = 0.001
//!
//! # source = "csv"
//! # path = "events.csv"
//! # [dataset.schema]
//! # categoricals = ["cat_0"]
//! # numericals = ["num_0", "num_1"]
//!
//! [folds]
//! n_folds = 1
//! stride_weeks = 4
//! undersample_rate = 1.0
//!
//! [run]                        # simulation settings shared by all runs
//! batch_size = 100
//! review_rate = 1000.0
//! window_days = 7.0
//!
//! [baseline]
//! n_trees = 300
//! ```

use std::path::{Path, PathBuf};

use coldstart_core::data::SynthSpec;
use coldstart_core::policies::{SequenceSpec, REGISTERED_SEQUENCES};
use coldstart_core::preprocess::SchemaSpec;
use coldstart_core::simulation::{BaselineConfig, RunConfig};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Parse(#[from] toml::de::Error),
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field: field.to_owned(), message: message.into() }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DatasetSource {
    Csv(CsvSource),
    Synth(SynthOverrides),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSource {
    pub path: PathBuf,
    pub schema: SchemaSpec,
}

/// A preset (or the defaults) with individual fields replaced.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positive_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub events_per_day: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_entities: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frauds_per_entity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_numericals: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_categoricals: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category_cardinality: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub separation: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift_per_week: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weeks: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_ms: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl SynthOverrides {
    pub fn apply(&self, mut s: SynthSpec) -> SynthSpec {
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { s.$f = v; } )* };
        }
        set!(positive_rate, events_per_day, n_entities, frauds_per_entity, n_numericals, n_categoricals, category_cardinality, separation, drift_per_week, weeks, start_ms, seed);
        s
    }
}

impl DatasetSource {
    /// The fully resolved synthetic spec, if this is a synthetic source.
    pub fn synth_spec(&self) -> Result<Option<SynthSpec>, ConfigError> {
        match self {
            DatasetSource::Csv(_) => Ok(None),
            DatasetSource::Synth(overrides) => {
                let base = match &overrides.preset {
                    Some(p) => SynthSpec::preset(p).ok_or_else(|| {
                        invalid("dataset.preset", format!("unknown preset `{p}`; known: {}", SynthSpec::PRESETS.join(", ")))
                    })?,
                    None => SynthSpec::default(),
                };
                Ok(Some(overrides.apply(base)))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FoldPlan {
    pub n_folds: usize,
    pub stride_weeks: u32,
    /// Entity-level sampling rate applied before slicing.
    pub undersample_rate: f64,
}

impl Default for FoldPlan {
    fn default() -> Self {
        Self { n_folds: 1, stride_weeks: 4, undersample_rate: 1.0 }
    }
}

fn default_seeds() -> usize {
    35
}

fn default_sequences() -> Vec<String> {
    REGISTERED_SEQUENCES.iter().map(|s| (*s).to_owned()).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default = "default_seeds")]
    pub seeds: usize,
    /// Seeds used for the optimistic baseline; all seeds when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_seeds: Option<usize>,
    #[serde(default = "default_sequences")]
    pub sequences: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    pub dataset: DatasetSource,
    #[serde(default)]
    pub folds: FoldPlan,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub baseline: BaselineConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads and validates; a relative csv path resolves against the
    /// config file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        let mut cfg = Self::from_toml(&text)?;
        if let DatasetSource::Csv(src) = &mut cfg.dataset {
            if src.path.is_relative() {
                if let Some(dir) = path.parent() {
                    src.path = dir.join(&src.path);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(invalid("name", "must be non-empty and free of path separators"));
        }
        if self.seeds == 0 {
            return Err(invalid("seeds", "at least one seed is required"));
        }
        if self.baseline_seeds == Some(0) {
            return Err(invalid("baseline_seeds", "must be positive"));
        }
        if self.sequences.is_empty() {
            return Err(invalid("sequences", "at least one sequence is required"));
        }
        for s in &self.sequences {
            SequenceSpec::parse(s).map_err(|e| invalid("sequences", e.to_string()))?;
        }
        if self.folds.n_folds == 0 {
            return Err(invalid("folds.n_folds", "must be positive"));
        }
        if !(self.folds.undersample_rate > 0.0 && self.folds.undersample_rate <= 1.0) {
            return Err(invalid("folds.undersample_rate", "must lie in (0, 1]"));
        }
        if let DatasetSource::Csv(CsvSource { schema, .. }) = &self.dataset {
            schema.validate().map_err(|e| invalid("dataset.schema", e.to_string()))?;
        }
        if let Some(spec) = self.dataset.synth_spec()? {
            spec.validate().map_err(|e| invalid("dataset", e.to_string()))?;
        }
        let mut probe = self.run.clone();
        probe.sequence = self.sequences[0].clone();
        probe.validate().map_err(|e| invalid("run", e.to_string()))?;
        if self.baseline.n_trees == 0 || self.baseline.max_depth == 0 {
            return Err(invalid("baseline", "n_trees and max_depth must be positive"));
        }
        if !(self.baseline.alpha > 0.0 && self.baseline.alpha < 1.0) {
            return Err(invalid("baseline.alpha", "must lie in (0, 1)"));
        }
        Ok(())
    }

    /// Schema of the dataset's events.
    pub fn schema(&self) -> Result<SchemaSpec, ConfigError> {
        match &self.dataset {
            DatasetSource::Csv(src) => Ok(src.schema.clone()),
            DatasetSource::Synth(_) => {
                let s = self.dataset.synth_spec()?.expect("synthetic source");
                Ok(SchemaSpec::canonical(s.n_categoricals, s.n_numericals))
            }
        }
    }
}
