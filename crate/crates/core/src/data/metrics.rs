use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Targets with `|y| < 1e-8` are left out of MAPE.
pub const MAPE_ZERO_THRESHOLD: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mae: f64,
    pub rmse: f64,
    /// Plain (non-symmetric) MAPE as a fraction; NaN if every target was
    /// excluded.
    pub mape: f64,
    pub mape_excluded: usize,
    pub count: usize,
}

/// Running sums for pooled metrics over many forecasts.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MetricAccumulator {
    abs: f64,
    sq: f64,
    pct: f64,
    pct_count: usize,
    excluded: usize,
    count: usize,
}

impl MetricAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, y_true: f64, y_pred: f64) {
        let e = y_pred - y_true;
        self.abs += e.abs();
        self.sq += e * e;
        if y_true.abs() < MAPE_ZERO_THRESHOLD {
            self.excluded += 1;
        } else {
            self.pct += e.abs() / y_true.abs();
            self.pct_count += 1;
        }
        self.count += 1;
    }

    pub fn finish(&self) -> Result<Metrics> {
        if self.count == 0 {
            return Err(Error::Empty("metric inputs"));
        }
        let n = self.count as f64;
        Ok(Metrics {
            mae: self.abs / n,
            rmse: (self.sq / n).sqrt(),
            mape: if self.pct_count == 0 {
                f64::NAN
            } else {
                self.pct / self.pct_count as f64
            },
            mape_excluded: self.excluded,
            count: self.count,
        })
    }
}

pub fn metrics(y_true: &[f64], y_pred: &[f64]) -> Result<Metrics> {
    if y_true.len() != y_pred.len() {
        return Err(Error::shape(
            "metrics",
            format!("{} targets vs {} predictions", y_true.len(), y_pred.len()),
        ));
    }
    let mut acc = MetricAccumulator::new();
    for (&t, &p) in y_true.iter().zip(y_pred) {
        acc.push(t, p);
    }
    acc.finish()
}
