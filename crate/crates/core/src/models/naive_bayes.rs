//! Gaussian naive Bayes.

use alloc::vec::Vec;

use super::{check_dim, check_supervised, ModelError, Scorer};
use crate::linalg::Matrix;
use crate::math::{ln, sigmoid};
use crate::oracle::Label;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Clone, Debug, PartialEq)]
pub struct NaiveBayes {
    pub means: [Vec<f64>; 2],
    pub variances: [Vec<f64>; 2],
    pub priors: [f64; 2],
    pub var_floor: f64,
}

impl NaiveBayes {
    /// Per-class moments. Every variance gets `1e-9 x` the largest overall
    /// feature variance added.
    pub fn fit(x: &Matrix, y: &[Label]) -> Result<Self, ModelError> {
        check_supervised(x, y)?;
        let d = x.cols();
        let n = x.rows() as f64;
        let mut overall_mean = alloc::vec![0.0; d];
        for r in x.iter_rows() {
            for (m, v) in overall_mean.iter_mut().zip(r) {
                *m += v / n;
            }
        }
        let mut max_var: f64 = 0.0;
        for j in 0..d {
            let v = x.iter_rows().map(|r| (r[j] - overall_mean[j]) * (r[j] - overall_mean[j])).sum::<f64>() / n;
            max_var = max_var.max(v);
        }
        let var_floor = (1e-9 * max_var).max(1e-300);

        let mut means = [alloc::vec![0.0; d], alloc::vec![0.0; d]];
        let mut variances = [alloc::vec![0.0; d], alloc::vec![0.0; d]];
        let mut counts = [0.0f64; 2];
        for (r, l) in x.iter_rows().zip(y) {
            let c = *l as usize;
            counts[c] += 1.0;
            for (m, v) in means[c].iter_mut().zip(r) {
                *m += v;
            }
        }
        for c in 0..2 {
            means[c].iter_mut().for_each(|m| *m /= counts[c]);
        }
        for (r, l) in x.iter_rows().zip(y) {
            let c = *l as usize;
            for j in 0..d {
                let dv = r[j] - means[c][j];
                variances[c][j] += dv * dv;
            }
        }
        for c in 0..2 {
            variances[c].iter_mut().for_each(|v| *v = *v / counts[c] + var_floor);
        }
        Ok(Self { means, variances, priors: [counts[0] / n, counts[1] / n], var_floor })
    }

    fn log_joint(&self, c: usize, x: &[f64]) -> f64 {
        let mut lj = ln(self.priors[c]);
        for ((v, m), s2) in x.iter().zip(&self.means[c]).zip(&self.variances[c]) {
            lj -= 0.5 * (LN_2PI + ln(*s2) + (v - m) * (v - m) / s2);
        }
        lj
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64, ModelError> {
        check_dim(self.means[0].len(), x.len())?;
        Ok(sigmoid(self.log_joint(1, x) - self.log_joint(0, x)))
    }
}

impl Scorer for NaiveBayes {
    fn n_features(&self) -> usize {
        self.means[0].len()
    }

    fn score_rows(&self, x: &Matrix) -> Result<Vec<f64>, ModelError> {
        check_dim(self.n_features(), x.cols())?;
        Ok(x.iter_rows().map(|r| sigmoid(self.log_joint(1, r) - self.log_joint(0, r))).collect())
    }
}
