use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::model::GpModel;
use super::normalize::Normalizer;
use super::windows::{make_windows, TrainingPairs, WindowConfig};
use crate::diff::Tensor;
use crate::error::{Error, Result};
use crate::gp::{GpCache, Posterior};
use crate::multivariate::{covariance_values, shared_block, variable_importance};

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Locations, targets and factorised covariance of the training windows.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingCache {
    pub locations: Tensor,
    pub targets: Vec<f64>,
    pub gp: GpCache,
}

/// Serialized form; the cache is rebuilt and checked against `fingerprint`.
#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    window: WindowConfig,
    names: Vec<String>,
    normalizer: Normalizer,
    kernel_text: String,
    train_series: Tensor,
    model: GpModel,
    fingerprint: String,
}

/// A fitted forecaster: parameters, normalization, the normalized training
/// series and the cached GP factorisation used for every prediction.
#[derive(Clone, Debug)]
pub struct TrainedModel {
    pub window: WindowConfig,
    pub names: Vec<String>,
    pub normalizer: Normalizer,
    pub model: GpModel,
    /// Normalized training rows the conditioning set is built from.
    pub train_series: Tensor,
    cache: TrainingCache,
}

/// Mean and standard deviation per step (rows) and variable (columns), on
/// the original scale.
#[derive(Clone, Debug, PartialEq)]
pub struct Forecast {
    pub mean: Tensor,
    pub std: Tensor,
}

fn fingerprint(cache: &TrainingCache) -> String {
    let mut h = Sha256::new();
    for part in [cache.locations.data(), cache.gp.chol.data(), &cache.gp.alpha[..], &cache.targets[..]] {
        for v in part {
            h.update(v.to_le_bytes());
        }
    }
    h.update(cache.gp.jitter.to_le_bytes());
    hex::encode(h.finalize())
}

impl TrainedModel {
    pub fn new(
        model: GpModel,
        window: WindowConfig,
        normalizer: Normalizer,
        names: Vec<String>,
        train_series: Tensor,
    ) -> Result<Self> {
        let pairs = make_windows(&train_series, &window)?;
        let cache = Self::build_cache(&model, &pairs)?;
        Ok(Self {
            window,
            names,
            normalizer,
            model,
            train_series,
            cache,
        })
    }

    fn build_cache(model: &GpModel, pairs: &TrainingPairs) -> Result<TrainingCache> {
        let h = model.learner.embed_values(&model.store, &pairs.windows)?;
        let k = covariance_values(&model.store, &model.kernel, &model.cross, &h, &h)?;
        let targets = pairs.stacked_targets();
        let gp = GpCache::new(&k, &targets, model.noise.sigma2(&model.store))?;
        Ok(TrainingCache {
            locations: h,
            targets,
            gp,
        })
    }

    pub fn cache(&self) -> &TrainingCache {
        &self.cache
    }

    pub fn fingerprint(&self) -> String {
        fingerprint(&self.cache)
    }

    pub fn variables(&self) -> usize {
        self.names.len()
    }

    pub fn kernel_text(&self) -> String {
        self.model.kernel.describe(&self.model.store)
    }

    pub fn training_pairs(&self) -> Result<TrainingPairs> {
        make_windows(&self.train_series, &self.window)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            version: MODEL_FORMAT_VERSION,
            window: self.window,
            names: self.names.clone(),
            normalizer: self.normalizer.clone(),
            kernel_text: self.kernel_text(),
            train_series: self.train_series.clone(),
            model: self.model.clone(),
            fingerprint: self.fingerprint(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.version != MODEL_FORMAT_VERSION {
            return Err(Error::Model(format!(
                "unsupported model format version {} (expected {MODEL_FORMAT_VERSION})",
                file.version
            )));
        }
        if !file.model.store.all_finite() {
            return Err(Error::Model("model contains non-finite parameters".into()));
        }
        let m = Self::new(file.model, file.window, file.normalizer, file.names, file.train_series)?;
        if m.fingerprint() != file.fingerprint {
            return Err(Error::Model("training cache does not match the stored fingerprint".into()));
        }
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Covariances of one normalized window against the training set:
    /// `(K_st, K_ss)` with `K_st` of shape `N × N·B`.
    pub fn test_covariances(&self, location: &[f64]) -> Result<(Tensor, Tensor)> {
        let m = &self.model;
        let hs = Tensor::matrix(1, location.len(), location.to_vec())?;
        let k_st = covariance_values(&m.store, &m.kernel, &m.cross, &hs, &self.cache.locations)?;
        let k_ss = covariance_values(&m.store, &m.kernel, &m.cross, &hs, &hs)?;
        Ok((k_st, k_ss))
    }

    /// One-step posterior (normalized scale) for a normalized `L × N` window.
    pub fn posterior_normalized(&self, window: &Tensor) -> Result<Posterior> {
        let h = self.model.learner.embed_one(&self.model.store, window)?;
        let (k_st, k_ss) = self.test_covariances(&h)?;
        self.cache.gp.predict(&k_st, &k_ss)
    }

    fn check_recent(&self, recent: &Tensor) -> Result<()> {
        let want = [self.window.length, self.variables()];
        if recent.shape() != want {
            return Err(Error::shape(
                "forecast input",
                format!("expected {} rows × {} variables, got {:?}", want[0], want[1], recent.shape()),
            ));
        }
        Ok(())
    }

    /// Iterated `F`-step forecast from the last `L` observed rows (original
    /// scale). Each step's mean is appended to the window for the next.
    pub fn predict(&self, recent: &Tensor, horizon: usize) -> Result<Forecast> {
        self.check_recent(recent)?;
        if horizon == 0 {
            return Err(Error::Config("forecast horizon must be at least 1".into()));
        }
        let (l, n) = (self.window.length, self.variables());
        let mut window = self.normalizer.apply(recent);
        let mut mean = Vec::with_capacity(horizon * n);
        let mut std = Vec::with_capacity(horizon * n);
        for _ in 0..horizon {
            let post = self.posterior_normalized(&window)?;
            let sd = post.std();
            for m in 0..n {
                mean.push(self.normalizer.invert_value(m, post.mean[m]));
                std.push(sd[m] * self.normalizer.std[m]);
            }
            let mut next = window.data()[n..].to_vec();
            next.extend_from_slice(&post.mean);
            window = Tensor::matrix(l, n, next)?;
        }
        Ok(Forecast {
            mean: Tensor::matrix(horizon, n, mean)?,
            std: Tensor::matrix(horizon, n, std)?,
        })
    }

    /// Mean squared one-step error, on the normalized scale, over every row
    /// of `series` (original scale) that has `L` rows before it.
    pub fn one_step_mse(&self, series: &Tensor) -> Result<f64> {
        let (l, n) = (self.window.length, self.variables());
        if series.rows() <= l || series.cols() != n {
            return Err(Error::TooShort(format!(
                "validation needs more than {l} rows of {n} variables, got {:?}",
                series.shape()
            )));
        }
        let z = self.normalizer.apply(series);
        let mut total = 0.0;
        let mut count = 0usize;
        for r in l..z.rows() {
            let w = Tensor::matrix(l, n, z.data()[(r - l) * n..r * n].to_vec())?;
            let post = self.posterior_normalized(&w)?;
            for m in 0..n {
                total += (post.mean[m] - z.at(r, m)).powi(2);
                count += 1;
            }
        }
        Ok(total / count as f64)
    }

    /// Full multivariate covariance `K` of the training windows.
    pub fn training_covariance(&self) -> Result<Tensor> {
        let m = &self.model;
        let h = &self.cache.locations;
        covariance_values(&m.store, &m.kernel, &m.cross, h, h)
    }

    /// Block `C^{m,n}` of the shared-kernel covariance on training locations.
    pub fn shared_block(&self, m: usize, n: usize) -> Result<Tensor> {
        shared_block(&self.model.store, &self.model.kernel, &self.cache.locations, m, n)
    }

    pub fn cross_weights(&self) -> Tensor {
        variable_importance(&self.model.store, &self.model.cross)
    }
}
