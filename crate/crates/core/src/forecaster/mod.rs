//! End-to-end forecasting: windowing, joint training of the location
//! learner, kernel and cross-variable weights, iterated prediction and
//! rolling-origin evaluation.

mod evaluate;
mod model;
mod normalize;
mod trained;
mod windows;

use serde::{Deserialize, Serialize};

use crate::data::TimeSeriesMatrix;
use crate::diff::Tensor;
use crate::error::{Error, Result};
use crate::kernel_search::{greedy_search, kas_search, retrain_zeta, KernelStructure, SearchOutcome};
use crate::kernels::BasicKernelKind;

pub use evaluate::{evaluate, evaluate_by_variable, evaluate_persistence, origins};
pub use model::{fit, GpModel, KernelSetup, ModelOptions, TrainConfig};
pub use normalize::Normalizer;
pub use trained::{Forecast, TrainedModel, TrainingCache, MODEL_FORMAT_VERSION};
pub use windows::{make_windows, window_count, TrainingPairs, WindowConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForecastConfig {
    pub window: WindowConfig,
    pub model: ModelOptions,
    pub train: TrainConfig,
    pub seed: u64,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        Self {
            window: WindowConfig::new(12, 1, 1),
            model: ModelOptions::default(),
            train: TrainConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum KernelStrategy {
    Fixed(KernelStructure),
    Kas {
        kinds: Vec<BasicKernelKind>,
        order: usize,
    },
    Greedy {
        kinds: Vec<BasicKernelKind>,
        order: usize,
    },
}

/// Normalized training data ready for model fitting.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub names: Vec<String>,
    pub normalizer: Normalizer,
    pub series: Tensor,
    pub pairs: TrainingPairs,
    pub window: WindowConfig,
}

impl Prepared {
    pub fn new(train: &TimeSeriesMatrix, window: &WindowConfig) -> Result<Self> {
        let normalizer = Normalizer::fit(&train.values);
        let series = normalizer.apply(&train.values);
        let pairs = make_windows(&series, window)?;
        Ok(Self {
            names: train.names.clone(),
            normalizer,
            series,
            pairs,
            window: *window,
        })
    }

    /// Trains `model` and wraps it with this data's normalization and cache.
    pub fn fit(&self, mut model: GpModel, cfg: &TrainConfig) -> Result<(TrainedModel, Vec<f64>)> {
        let losses = fit(&mut model, &self.pairs, cfg)?;
        let trained = TrainedModel::new(
            model,
            self.window,
            self.normalizer.clone(),
            self.names.clone(),
            self.series.clone(),
        )?;
        Ok((trained, losses))
    }

    pub fn build(&self, setup: &KernelSetup, cfg: &ForecastConfig) -> Result<GpModel> {
        GpModel::new(&self.pairs, &cfg.model, setup, cfg.seed)
    }
}

/// Last `L` training rows followed by the validation rows, so every
/// validation row can be predicted one step ahead.
pub fn validation_context(train: &TimeSeriesMatrix, val: &TimeSeriesMatrix, length: usize) -> Result<Tensor> {
    if train.len() < length || train.variables() != val.variables() {
        return Err(Error::Config(
            "validation segment must share the training variables and follow at least L training rows".into(),
        ));
    }
    let n = train.variables();
    let mut data = train.values.data()[(train.len() - length) * n..].to_vec();
    data.extend_from_slice(val.values.data());
    Tensor::matrix(length + val.len(), n, data)
}

pub struct TrainOutcome {
    pub model: TrainedModel,
    /// Per-epoch NLML of the final fit.
    pub losses: Vec<f64>,
    pub search: Option<SearchOutcome>,
}

/// Trains a forecaster on `train`, searching the kernel structure first when
/// the strategy asks for it (which requires `val`).
pub fn train(
    train: &TimeSeriesMatrix,
    val: Option<&TimeSeriesMatrix>,
    strategy: &KernelStrategy,
    cfg: &ForecastConfig,
) -> Result<TrainOutcome> {
    cfg.window.validate()?;
    cfg.train.validate()?;
    let need_val = || val.ok_or_else(|| Error::Config("kernel search needs a validation segment".into()));
    match strategy {
        KernelStrategy::Fixed(structure) => {
            let prep = Prepared::new(train, &cfg.window)?;
            let model = prep.build(&KernelSetup::Fixed(structure.clone()), cfg)?;
            let (model, losses) = prep.fit(model, &cfg.train)?;
            Ok(TrainOutcome {
                model,
                losses,
                search: None,
            })
        }
        KernelStrategy::Kas { kinds, order } => {
            let (outcome, relaxed) = kas_search(train, need_val()?, kinds, *order, cfg)?;
            let (model, losses) = retrain_zeta(&outcome.structure, train, cfg, Some(&relaxed))?;
            Ok(TrainOutcome {
                model,
                losses,
                search: Some(outcome),
            })
        }
        KernelStrategy::Greedy { kinds, order } => {
            let (outcome, model, losses) = greedy_search(train, need_val()?, kinds, *order, cfg)?;
            Ok(TrainOutcome {
                model,
                losses,
                search: Some(outcome),
            })
        }
    }
}
