use super::TimeSeriesMatrix;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SplitSpec {
    /// Relative weights, e.g. `7:1:2`. Validation and test take the floor of
    /// their share; training takes the rest.
    Ratios([f64; 3]),
    /// Absolute row counts; any rows beyond their sum go to training.
    Counts([usize; 3]),
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self::Ratios([7.0, 1.0, 2.0])
    }
}

impl SplitSpec {
    /// Row counts `(train, val, test)` for a series of length `t`.
    pub fn lengths(&self, t: usize) -> Result<[usize; 3]> {
        let [tr, va, te] = match *self {
            SplitSpec::Ratios(r) => {
                if r.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
                    return Err(Error::Config(format!("split ratios must be positive, got {r:?}")));
                }
                let total: f64 = r.iter().sum();
                let va = (t as f64 * r[1] / total).floor() as usize;
                let te = (t as f64 * r[2] / total).floor() as usize;
                [t.saturating_sub(va + te), va, te]
            }
            SplitSpec::Counts(c) => {
                if c.contains(&0) {
                    return Err(Error::Config(format!("split counts must be positive, got {c:?}")));
                }
                let sum: usize = c.iter().sum();
                if sum > t {
                    return Err(Error::Config(format!(
                        "split counts {c:?} sum to {sum}, more than the {t} rows available"
                    )));
                }
                [c[0] + (t - sum), c[1], c[2]]
            }
        };
        if tr == 0 || va == 0 || te == 0 {
            return Err(Error::Config(format!(
                "split of {t} rows leaves an empty segment ({tr}:{va}:{te})"
            )));
        }
        Ok([tr, va, te])
    }
}

/// Contiguous chronological train/validation/test segments.
pub fn split(y: &TimeSeriesMatrix, spec: &SplitSpec) -> Result<(TimeSeriesMatrix, TimeSeriesMatrix, TimeSeriesMatrix)> {
    let [tr, va, te] = spec.lengths(y.len())?;
    Ok((y.rows(0, tr), y.rows(tr, va), y.rows(tr + va, te)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(t: usize) -> TimeSeriesMatrix {
        TimeSeriesMatrix::from_columns(&[(0..t).map(|k| k as f64).collect()]).unwrap()
    }

    #[test]
    fn seven_one_two() {
        assert_eq!(SplitSpec::default().lengths(10).unwrap(), [7, 1, 2]);
        assert_eq!(SplitSpec::Ratios([0.7, 0.1, 0.2]).lengths(10).unwrap(), [7, 1, 2]);
        // remainder goes to training
        assert_eq!(SplitSpec::default().lengths(13).unwrap(), [10, 1, 2]);
    }

    #[test]
    fn absolute_counts() {
        assert_eq!(SplitSpec::Counts([3200, 400, 537]).lengths(4137).unwrap(), [3200, 400, 537]);
        assert_eq!(SplitSpec::Counts([5, 2, 2]).lengths(10).unwrap(), [6, 2, 2]);
    }

    #[test]
    fn invalid_specs() {
        assert!(SplitSpec::Counts([8, 2, 2]).lengths(10).is_err());
        assert!(SplitSpec::Ratios([7.0, 0.0, 2.0]).lengths(10).is_err());
        assert!(SplitSpec::default().lengths(4).is_err());
    }

    #[test]
    fn concatenation_reproduces_series() {
        let y = series(57);
        let (a, b, c) = split(&y, &SplitSpec::default()).unwrap();
        let mut all = a.values.data().to_vec();
        all.extend_from_slice(b.values.data());
        all.extend_from_slice(c.values.data());
        assert_eq!(all, y.values.data());
    }
}
