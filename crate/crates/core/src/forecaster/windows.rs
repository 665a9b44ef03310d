use serde::{Deserialize, Serialize};

use crate::diff::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowConfig {
    /// Subsequence length L.
    pub length: usize,
    /// Moving step Δ.
    pub step: usize,
    /// Forecast horizon F.
    pub horizon: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self::new(12, 1, 1)
    }
}

impl WindowConfig {
    pub fn new(length: usize, step: usize, horizon: usize) -> Self {
        Self {
            length,
            step,
            horizon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.length == 0 || self.step == 0 || self.horizon == 0 {
            return Err(Error::Config(format!(
                "window length, step and horizon must be at least 1 (got L={}, Δ={}, F={})",
                self.length, self.step, self.horizon
            )));
        }
        Ok(())
    }
}

/// Number of windows `B = ⌊(t − L − 1)/Δ⌋ + 1` that fit a series of `t` rows.
pub fn window_count(t: usize, length: usize, step: usize) -> usize {
    if t < length + 1 || step == 0 {
        0
    } else {
        (t - length - 1) / step + 1
    }
}

/// Subsequences `M_i` (rows `(i−1)Δ+1 ..= (i−1)Δ+L`, 1-based) and the row
/// after each as its target.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingPairs {
    pub windows: Vec<Tensor>,
    /// `B × N`.
    pub targets: Tensor,
    /// 0-based row index of each target.
    pub target_rows: Vec<usize>,
}

impl TrainingPairs {
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    /// Targets stacked variable-major, matching the covariance layout.
    pub fn stacked_targets(&self) -> Vec<f64> {
        let (b, n) = (self.targets.rows(), self.targets.cols());
        let mut out = Vec::with_capacity(b * n);
        for m in 0..n {
            for i in 0..b {
                out.push(self.targets.at(i, m));
            }
        }
        out
    }
}

pub fn make_windows(y: &Tensor, cfg: &WindowConfig) -> Result<TrainingPairs> {
    cfg.validate()?;
    let (t, n) = (y.rows(), y.cols());
    if cfg.step > t {
        return Err(Error::Config(format!("step {} exceeds series length {t}", cfg.step)));
    }
    let b = window_count(t, cfg.length, cfg.step);
    if b == 0 {
        return Err(Error::TooShort(format!(
            "{t} rows cannot hold a window of length {} plus a target",
            cfg.length
        )));
    }
    let mut windows = Vec::with_capacity(b);
    let mut targets = Vec::with_capacity(b * n);
    let mut target_rows = Vec::with_capacity(b);
    for i in 0..b {
        let start = i * cfg.step;
        let data = y.data()[start * n..(start + cfg.length) * n].to_vec();
        windows.push(Tensor::matrix(cfg.length, n, data)?);
        let r = start + cfg.length;
        targets.extend_from_slice(y.row_slice(r));
        target_rows.push(r);
    }
    Ok(TrainingPairs {
        windows,
        targets: Tensor::matrix(b, n, targets)?,
        target_rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn series(t: usize) -> Tensor {
        Tensor::column(&(1..=t).map(|k| k as f64).collect::<Vec<_>>())
    }

    #[test]
    fn single_window() {
        let p = make_windows(&series(5), &WindowConfig::new(4, 1, 1)).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p.windows[0].data(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(p.targets.data(), &[5.0]);
    }

    #[test]
    fn strided_targets() {
        let p = make_windows(&series(9), &WindowConfig::new(4, 2, 1)).unwrap();
        assert_eq!(p.len(), 3);
        // values equal 1-based row numbers
        assert_eq!(p.targets.data(), &[5.0, 7.0, 9.0]);
    }

    #[test]
    fn step_longer_than_series() {
        assert!(make_windows(&series(5), &WindowConfig::new(2, 6, 1)).is_err());
        assert!(matches!(
            make_windows(&series(4), &WindowConfig::new(4, 1, 1)),
            Err(Error::TooShort(_))
        ));
    }

    #[test]
    fn stacking_is_variable_major() {
        let y = Tensor::from_rows(&[vec![1.0, 10.0], vec![2.0, 20.0], vec![3.0, 30.0]]).unwrap();
        let p = make_windows(&y, &WindowConfig::new(1, 1, 1)).unwrap();
        assert_eq!(p.stacked_targets(), vec![2.0, 3.0, 20.0, 30.0]);
    }

    proptest! {
        #[test]
        fn targets_partition_bijectively(t in 2usize..80, l in 1usize..10, step in 1usize..6) {
            prop_assume!(t > l && step <= t);
            let p = make_windows(&series(t), &WindowConfig::new(l, step, 1)).unwrap();
            prop_assert_eq!(p.len(), window_count(t, l, step));
            let mut seen = std::collections::HashSet::new();
            for (i, &r) in p.target_rows.iter().enumerate() {
                prop_assert_eq!(r, i * step + l);
                prop_assert!(r < t);
                prop_assert!(seen.insert(r));
                prop_assert_eq!((r - l) / step, i);
            }
            // one more window would overrun
            prop_assert!(p.len() * step + l >= t);
        }
    }
}
