//! L2-regularized logistic regression fitted by full-batch gradient descent
//! with backtracking line search.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{check_dim, check_supervised, ModelError, Scorer};
use crate::linalg::Matrix;
use crate::math::{dot, sigmoid, softplus, sqrt};
use crate::oracle::Label;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogisticParams {
    /// Penalty `lambda / 2 * ||w||^2` added to the mean log loss. The bias is
    /// not penalized.
    pub l2_lambda: f64,
    pub max_iter: usize,
    /// Stop once the gradient norm falls below this.
    pub tol: f64,
}

impl Default for LogisticParams {
    fn default() -> Self {
        Self { l2_lambda: 1e-3, max_iter: 1000, tol: 1e-6 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub l2_lambda: f64,
    /// Objective after each accepted step, starting at the initial point.
    pub objective_trace: Vec<f64>,
}

impl LogisticModel {
    /// A model with the given parameters and no training history.
    pub fn from_parameters(weights: Vec<f64>, bias: f64, l2_lambda: f64) -> Self {
        Self { weights, bias, l2_lambda, objective_trace: Vec::new() }
    }

    /// Fits from zero parameters. `_seed` is accepted for interface symmetry;
    /// the optimizer is deterministic.
    pub fn fit(x: &Matrix, y: &[Label], params: &LogisticParams, _seed: u64) -> Result<Self, ModelError> {
        check_supervised(x, y)?;
        let d = x.cols();
        let mut model = Self::from_parameters(vec![0.0; d], 0.0, params.l2_lambda);
        let mut f = model.objective(x, y);
        model.objective_trace.push(f);
        let mut step = 1.0;
        for _ in 0..params.max_iter {
            let (gw, gb) = model.gradient(x, y);
            let g2 = dot(&gw, &gw) + gb * gb;
            if sqrt(g2) < params.tol {
                break;
            }
            let mut accepted = false;
            while step > 1e-20 {
                let trial = Self::from_parameters(
                    model.weights.iter().zip(&gw).map(|(w, g)| w - step * g).collect(),
                    model.bias - step * gb,
                    params.l2_lambda,
                );
                let ft = trial.objective(x, y);
                if ft <= f - 0.5 * step * g2 {
                    model.weights = trial.weights;
                    model.bias = trial.bias;
                    f = ft;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
            model.objective_trace.push(f);
            step *= 2.0;
        }
        Ok(model)
    }

    #[inline]
    pub fn decision(&self, x: &[f64]) -> f64 {
        dot(&self.weights, x) + self.bias
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64, ModelError> {
        check_dim(self.weights.len(), x.len())?;
        Ok(sigmoid(self.decision(x)))
    }

    pub fn predict_rows(&self, x: &Matrix) -> Result<Vec<f64>, ModelError> {
        check_dim(self.weights.len(), x.cols())?;
        Ok(x.iter_rows().map(|r| sigmoid(self.decision(r))).collect())
    }

    /// Mean log loss plus the L2 penalty.
    pub fn objective(&self, x: &Matrix, y: &[Label]) -> f64 {
        let n = x.rows() as f64;
        let loss: f64 = x
            .iter_rows()
            .zip(y)
            .map(|(r, l)| {
                let z = self.decision(r);
                softplus(z) - l.as_f64() * z
            })
            .sum();
        loss / n + 0.5 * self.l2_lambda * dot(&self.weights, &self.weights)
    }

    /// Gradient of [`objective`](Self::objective) w.r.t. (weights, bias).
    pub fn gradient(&self, x: &Matrix, y: &[Label]) -> (Vec<f64>, f64) {
        let n = x.rows() as f64;
        let mut gw = vec![0.0; self.weights.len()];
        let mut gb = 0.0;
        for (r, l) in x.iter_rows().zip(y) {
            let e = sigmoid(self.decision(r)) - l.as_f64();
            for (g, v) in gw.iter_mut().zip(r) {
                *g += e * v;
            }
            gb += e;
        }
        for (g, w) in gw.iter_mut().zip(&self.weights) {
            *g = *g / n + self.l2_lambda * w;
        }
        (gw, gb / n)
    }
}

impl Scorer for LogisticModel {
    fn n_features(&self) -> usize {
        self.weights.len()
    }

    fn score_rows(&self, x: &Matrix) -> Result<Vec<f64>, ModelError> {
        self.predict_rows(x)
    }
}
