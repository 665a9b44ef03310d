use rayon::prelude::*;

use super::trained::TrainedModel;
use crate::data::{MetricAccumulator, Metrics};
use crate::diff::Tensor;
use crate::error::{Error, Result};

/// Forecast origins `o` (0-based row of the first forecast step) for which a
/// full window precedes `o` and `F` targets follow.
pub fn origins(len: usize, length: usize, horizon: usize) -> Result<std::ops::RangeInclusive<usize>> {
    if len < length + horizon {
        return Err(Error::TooShort(format!(
            "evaluation needs at least L + F = {} rows, got {len}",
            length + horizon
        )));
    }
    Ok(length..=len - horizon)
}

fn pooled(y: &Tensor, length: usize, horizon: usize, preds: Vec<Tensor>) -> Result<Metrics> {
    let n = y.cols();
    let mut acc = MetricAccumulator::new();
    for (o, p) in origins(y.rows(), length, horizon)?.zip(preds) {
        for k in 0..horizon {
            for m in 0..n {
                acc.push(y.at(o + k, m), p.at(k, m));
            }
        }
    }
    acc.finish()
}

fn rolling_forecasts(model: &TrainedModel, series: &Tensor, horizon: usize) -> Result<Vec<Tensor>> {
    let l = model.window.length;
    let n = model.variables();
    if series.cols() != n {
        return Err(Error::shape(
            "evaluate",
            format!("model has {n} variables, series has {}", series.cols()),
        ));
    }
    origins(series.rows(), l, horizon)?
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|o| {
            let recent = Tensor::matrix(l, n, series.data()[(o - l) * n..o * n].to_vec())?;
            Ok(model.predict(&recent, horizon)?.mean)
        })
        .collect()
}

/// Rolling-origin evaluation: from every origin, forecast `F` steps and pool
/// MAE/RMSE/MAPE over origins, steps and variables on the original scale.
pub fn evaluate(model: &TrainedModel, series: &Tensor, horizon: usize) -> Result<Metrics> {
    let preds = rolling_forecasts(model, series, horizon)?;
    pooled(series, model.window.length, horizon, preds)
}

/// Rolling-origin metrics for each variable separately.
pub fn evaluate_by_variable(model: &TrainedModel, series: &Tensor, horizon: usize) -> Result<Vec<Metrics>> {
    let l = model.window.length;
    let preds = rolling_forecasts(model, series, horizon)?;
    (0..series.cols())
        .map(|m| {
            let mut acc = MetricAccumulator::new();
            for (o, p) in origins(series.rows(), l, horizon)?.zip(&preds) {
                for k in 0..horizon {
                    acc.push(series.at(o + k, m), p.at(k, m));
                }
            }
            acc.finish()
        })
        .collect()
}

/// The same rolling-origin protocol with the last observed row repeated as
/// the forecast.
pub fn evaluate_persistence(series: &Tensor, length: usize, horizon: usize) -> Result<Metrics> {
    let n = series.cols();
    let preds = origins(series.rows(), length, horizon)?
        .map(|o| {
            let last = series.row_slice(o - 1);
            let data = (0..horizon).flat_map(|_| last.iter().copied()).collect();
            Tensor::matrix(horizon, n, data)
        })
        .collect::<Result<Vec<_>>>()?;
    pooled(series, length, horizon, preds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn origin_range() {
        assert_eq!(origins(10, 4, 2).unwrap(), 4..=8);
        assert!(origins(5, 4, 2).is_err());
    }

    #[test]
    fn persistence_matches_manual_computation() {
        let y: Vec<f64> = (0..30).map(|k| (k as f64 * 0.5).sin() + 2.0).collect();
        let series = Tensor::column(&y);
        let (l, f) = (5, 3);
        let m = evaluate_persistence(&series, l, f).unwrap();
        let (mut abs, mut sq, mut pct, mut cnt) = (0.0, 0.0, 0.0, 0.0);
        for o in l..=y.len() - f {
            for k in 0..f {
                let e = y[o - 1] - y[o + k];
                abs += e.abs();
                sq += e * e;
                pct += e.abs() / y[o + k].abs();
                cnt += 1.0;
            }
        }
        assert!((m.mae - abs / cnt).abs() < 1e-10);
        assert!((m.rmse - (sq / cnt).sqrt()).abs() < 1e-10);
        assert!((m.mape - pct / cnt).abs() < 1e-10);
    }
}
