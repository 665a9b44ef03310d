use serde::{Deserialize, Serialize};

use super::windows::TrainingPairs;
use crate::diff::{Adam, AdamConfig, Binding, Graph, ParamStore, Tensor, Var};
use crate::error::{Error, Result};
use crate::gp::{nlml, NoiseModel};
use crate::kernel_search::{CovKernel, KernelExpr, KernelStructure, RelaxedKernel};
use crate::kernels::{BasicKernelKind, LocationSummary};
use crate::location::{default_patch, LocationConfig, LocationLearner};
use crate::multivariate::{covariance, default_rank, CrossVariableWeights};

/// Architecture hyperparameters outside the kernel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelOptions {
    /// Patch size δ; defaults to the largest divisor of L that is ≤ L/2.
    pub patch: Option<usize>,
    pub width: usize,
    pub heads: usize,
    pub hidden: [usize; 2],
    /// Rank V of D′; defaults to `max(1, ⌊N/4⌋)`.
    pub rank: Option<usize>,
    /// When false, D′ is fixed at zero (independent GPs per variable).
    pub coupled: bool,
    pub noise_init: f64,
}

impl Default for ModelOptions {
    fn default() -> Self {
        Self {
            patch: None,
            width: 8,
            heads: 1,
            hidden: [64, 32],
            rank: None,
            coupled: true,
            noise_init: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum KernelSetup {
    Fixed(KernelStructure),
    Relaxed {
        kinds: Vec<BasicKernelKind>,
        order: usize,
    },
}

/// All learnable parts of the forecaster, with values held in one store.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpModel {
    pub store: ParamStore,
    pub learner: LocationLearner,
    pub kernel: CovKernel,
    pub cross: CrossVariableWeights,
    pub noise: NoiseModel,
}

impl GpModel {
    /// Builds a model for `N`-variable windows of length `L`. Kernel
    /// parameters that depend on the location range (PER period, LIN
    /// offset) are seeded from the initial locations of `pairs`.
    pub fn new(pairs: &TrainingPairs, options: &ModelOptions, setup: &KernelSetup, seed: u64) -> Result<Self> {
        let first = pairs.windows.first().ok_or(Error::Empty("training windows"))?;
        let (l, n) = (first.rows(), first.cols());
        let mut store = ParamStore::new();
        let cfg = LocationConfig {
            window: l,
            variables: n,
            patch: options.patch.unwrap_or_else(|| default_patch(l)),
            width: options.width,
            heads: options.heads,
            hidden: options.hidden,
        };
        let learner = LocationLearner::new(&mut store, "loc", cfg, seed)?;
        let h0 = learner.embed_values(&store, &pairs.windows)?;
        let summary = LocationSummary::of(h0.data());
        let kernel = match setup {
            KernelSetup::Fixed(s) => CovKernel::Expr(KernelExpr::instantiate(s, &mut store, "kernel", &summary)),
            KernelSetup::Relaxed { kinds, order } => {
                CovKernel::Relaxed(RelaxedKernel::new(&mut store, "kas", kinds, *order, &summary)?)
            }
        };
        let rank = options.rank.unwrap_or_else(|| default_rank(n));
        let cross = CrossVariableWeights::new(&mut store, "cross", n, rank, seed.wrapping_add(1))?;
        if !options.coupled {
            cross.decouple(&mut store);
        }
        if !(options.noise_init > 0.0) {
            return Err(Error::Config("initial noise variance must be positive".into()));
        }
        let noise = NoiseModel::new(&mut store, "noise", options.noise_init);
        Ok(Self {
            store,
            learner,
            kernel,
            cross,
            noise,
        })
    }

    pub fn variables(&self) -> usize {
        self.learner.config.variables
    }

    pub fn window(&self) -> usize {
        self.learner.config.window
    }

    /// Differentiable NLML of the training pairs.
    pub fn loss(&self, g: &mut Graph, b: &Binding, pairs: &TrainingPairs) -> Result<Var> {
        let h = self.learner.embed(g, b, &pairs.windows)?;
        let k = covariance(g, b, &self.kernel, &self.cross, h, h)?;
        let y = g.constant(Tensor::column(&pairs.stacked_targets()));
        let s2 = g.exp(b.var(self.noise.raw_log_sigma2));
        nlml(g, k, y, s2)
    }

    pub fn loss_value(&self, pairs: &TrainingPairs) -> Result<f64> {
        let mut g = Graph::new();
        let b = self.store.bind(&mut g);
        let l = self.loss(&mut g, &b, pairs)?;
        Ok(g.value(l).item())
    }

    /// Copies every parameter whose name also exists in `other` with the
    /// same shape.
    pub fn copy_matching(&mut self, other: &ParamStore) {
        let ids: Vec<_> = self.store.ids().collect();
        for id in ids {
            if let Some(src) = other.find(self.store.name(id)) {
                if other.get(src).shape() == self.store.get(id).shape() {
                    let v = other.get(src).clone();
                    self.store.set(id, v);
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    /// Multiplicative learning-rate decay applied every `step_size` epochs.
    pub decay: f64,
    pub step_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            lr: 1e-3,
            decay: 0.9,
            step_size: 20,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !(self.decay > 0.0 && self.decay <= 1.0) || self.step_size == 0 {
            return Err(Error::Config(format!(
                "need lr > 0, decay in (0, 1] and step size ≥ 1 (got {}, {}, {})",
                self.lr, self.decay, self.step_size
            )));
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr * self.decay.powi((epoch / self.step_size) as i32)
    }
}

/// Full-batch Adam on the training NLML. Returns the loss at the start of
/// every epoch.
pub fn fit(model: &mut GpModel, pairs: &TrainingPairs, cfg: &TrainConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let mut adam = Adam::new(AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    });
    let mut losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        adam.config.lr = cfg.lr_at(epoch);
        let mut g = Graph::new();
        let b = model.store.bind(&mut g);
        let root = model.loss(&mut g, &b, pairs)?;
        let loss = g.value(root).item();
        if !loss.is_finite() {
            return Err(Error::Divergence { epoch, loss });
        }
        let grads = g.backward(root)?;
        let grads = model.store.collect_grads(&b, &grads);
        if grads.iter().any(|t| !t.is_finite()) {
            return Err(Error::Divergence { epoch, loss });
        }
        adam.step(&mut model.store, &grads);
        if !model.store.all_finite() {
            return Err(Error::Divergence { epoch, loss });
        }
        log::debug!("epoch {epoch}: loss {loss:.6}");
        losses.push(loss);
    }
    Ok(losses)
}
