use serde::{Deserialize, Serialize};

use crate::diff::Tensor;

/// Per-variable z-score statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    /// Statistics of each column; a constant column gets unit scale.
    pub fn fit(y: &Tensor) -> Self {
        let (t, n) = (y.rows(), y.cols());
        let mut mean = vec![0.0; n];
        let mut std = vec![0.0; n];
        for m in 0..n {
            let mu = (0..t).map(|r| y.at(r, m)).sum::<f64>() / t as f64;
            let var = (0..t).map(|r| (y.at(r, m) - mu).powi(2)).sum::<f64>() / t as f64;
            mean[m] = mu;
            std[m] = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
        }
        Self { mean, std }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            mean: vec![0.0; n],
            std: vec![1.0; n],
        }
    }

    pub fn apply(&self, y: &Tensor) -> Tensor {
        let n = y.cols();
        let mut out = y.clone();
        for (k, v) in out.data_mut().iter_mut().enumerate() {
            let m = k % n;
            *v = (*v - self.mean[m]) / self.std[m];
        }
        out
    }

    pub fn invert_value(&self, m: usize, v: f64) -> f64 {
        v * self.std[m] + self.mean[m]
    }

    pub fn apply_value(&self, m: usize, v: f64) -> f64 {
        (v - self.mean[m]) / self.std[m]
    }
}
