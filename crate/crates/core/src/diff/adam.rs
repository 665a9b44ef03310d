use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use super::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Clone, Debug, Default)]
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    pub step: u64,
}

impl AdamState {
    pub fn new() -> Self {
        Self::default()
    }
}

/// One bias-corrected Adam update over a flat parameter slice. Moments are
/// lazily zero-initialised on the first call.
pub fn adam_step(
    params: &mut [Tensor],
    grads: &[Tensor],
    state: &mut AdamState,
    cfg: &AdamConfig,
    frozen: &[bool],
) {
    if state.m.len() != params.len() {
        state.m = params.iter().map(|p| vec![0.0; p.len()]).collect();
        state.v = params.iter().map(|p| vec![0.0; p.len()]).collect();
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        if frozen.get(k).copied().unwrap_or(false) {
            continue;
        }
        let (m, v) = (&mut state.m[k], &mut state.v[k]);
        for (i, (x, &gi)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
            let mhat = m[i] / c1;
            let vhat = v[i] / c2;
            *x -= cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
        }
    }
}

/// Adam over every parameter in a store.
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    state: AdamState,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            state: AdamState::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.state.step
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &[Tensor]) {
        let ids: Vec<_> = store.ids().collect();
        let frozen: Vec<bool> = ids.iter().map(|&id| store.is_frozen(id)).collect();
        let mut values: Vec<Tensor> = ids.iter().map(|&id| store.get(id).clone()).collect();
        adam_step(&mut values, grads, &mut self.state, &self.config, &frozen);
        for (id, v) in ids.into_iter().zip(values) {
            store.set(id, v);
        }
    }
}
