//! From-scratch model kernels: isolation forest, random forest, logistic
//! regression, Gaussian naive Bayes and gradient-boosted trees.

use thiserror::Error;

use crate::linalg::Matrix;
use crate::oracle::Label;

pub mod boosting;
pub mod forest;
pub mod isolation;
pub mod logistic;
pub mod naive_bayes;
pub(crate) mod tree;

pub use boosting::{BoostedTrees, BoostingParams};
pub use forest::{ForestParams, MaxFeatures, RandomForest};
pub use isolation::{average_path_length, score_from_path_length, IsolationForest, IsolationParams};
pub use logistic::{LogisticModel, LogisticParams};
pub use naive_bayes::NaiveBayes;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("training data is empty")]
    EmptyData,
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("{rows} rows but {labels} labels")]
    LabelCountMismatch { rows: usize, labels: usize },
    #[error("features contain non-finite values")]
    NonFinite,
}

/// Anything that maps feature rows to a real score (higher = more positive).
pub trait Scorer {
    fn n_features(&self) -> usize;

    fn score_rows(&self, x: &Matrix) -> Result<alloc::vec::Vec<f64>, ModelError>;
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<(), ModelError> {
    if expected == got {
        Ok(())
    } else {
        Err(ModelError::DimensionMismatch { expected, got })
    }
}

/// Shared preconditions of the supervised fits.
pub(crate) fn check_supervised(x: &Matrix, y: &[Label]) -> Result<(), ModelError> {
    if x.rows() == 0 {
        return Err(ModelError::EmptyData);
    }
    if x.rows() != y.len() {
        return Err(ModelError::LabelCountMismatch { rows: x.rows(), labels: y.len() });
    }
    let pos = y.iter().filter(|l| l.is_positive()).count();
    if pos == 0 || pos == y.len() {
        return Err(ModelError::SingleClass);
    }
    if !x.all_finite() {
        return Err(ModelError::NonFinite);
    }
    Ok(())
}
