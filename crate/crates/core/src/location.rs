//! Patch-attention location learner: maps each L×N subsequence to a Gaussian
//! location in R^N.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::diff::{Axis, Binding, Graph, ParamId, ParamStore, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocationConfig {
    /// Subsequence length L.
    pub window: usize,
    /// Number of variables N.
    pub variables: usize,
    /// Patch size δ; must divide L.
    pub patch: usize,
    /// Pseudo-observation width d.
    pub width: usize,
    /// d_k in the `1/√d_k` score scaling.
    pub heads: usize,
    pub hidden: [usize; 2],
}

/// Largest divisor of `l` that is at most `l / 2` (1 when `l < 2`).
pub fn default_patch(l: usize) -> usize {
    (1..=l / 2).rev().find(|d| l.is_multiple_of(*d)).unwrap_or(1)
}

impl LocationConfig {
    pub fn new(window: usize, variables: usize) -> Self {
        Self {
            window,
            variables,
            patch: default_patch(window),
            width: 8,
            heads: 1,
            hidden: [64, 32],
        }
    }

    pub fn patches(&self) -> usize {
        self.window / self.patch
    }

    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.variables == 0 {
            return Err(Error::Config("window length and variable count must be positive".into()));
        }
        if self.patch == 0 || !self.window.is_multiple_of(self.patch) {
            return Err(Error::Config(format!(
                "patch size {} does not divide window length {}",
                self.patch, self.window
            )));
        }
        if self.width == 0 || self.heads == 0 || self.hidden.contains(&0) {
            return Err(Error::Config("attention and MLP widths must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
}

/// Learnable parameters of the location learner, held by id.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocationLearner {
    pub config: LocationConfig,
    /// Pseudo observations, one row per (patch, variable): `(P·N) × d`.
    pub pseudo: ParamId,
    pub w_k: ParamId,
    pub w_v: ParamId,
    pub layers: Vec<Dense>,
}

impl LocationLearner {
    pub fn new(store: &mut ParamStore, prefix: &str, config: LocationConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut normal = |rows: usize, cols: usize, std: f64| {
            let dist = Normal::new(0.0, std).expect("positive std");
            let data = (0..rows * cols).map(|_| dist.sample(&mut rng)).collect();
            Tensor::matrix(rows, cols, data).expect("shape")
        };
        let (p, n, d) = (config.patches(), config.variables, config.width);
        let pseudo = store.insert(format!("{prefix}.pseudo"), normal(p * n, d, 1.0));
        let w_k = store.insert(format!("{prefix}.w_k"), normal(1, d, 1.0 / (d as f64).sqrt()));
        let w_v = store.insert(format!("{prefix}.w_v"), normal(1, d, 1.0));
        let widths = [p * n * d, config.hidden[0], config.hidden[1], n];
        let mut layers = Vec::with_capacity(3);
        for (k, w) in widths.windows(2).enumerate() {
            let weight = store.insert(
                format!("{prefix}.mlp{k}.weight"),
                normal(w[0], w[1], 1.0 / (w[0] as f64).sqrt()),
            );
            let bias = store.insert(format!("{prefix}.mlp{k}.bias"), Tensor::zeros(&[1, w[1]]));
            layers.push(Dense { weight, bias });
        }
        Ok(Self {
            config,
            pseudo,
            w_k,
            w_v,
            layers,
        })
    }

    fn check_windows(&self, windows: &[Tensor]) -> Result<()> {
        if windows.is_empty() {
            return Err(Error::Empty("subsequence batch"));
        }
        let want = [self.config.window, self.config.variables];
        for (i, w) in windows.iter().enumerate() {
            if w.shape() != want {
                return Err(Error::shape(
                    "embed",
                    format!("subsequence {i} has shape {:?}, expected {want:?}", w.shape()),
                ));
            }
        }
        Ok(())
    }

    /// Patch `p` of variable `n` for every subsequence: `B × δ`.
    fn patch_inputs(&self, windows: &[Tensor], p: usize, n: usize) -> Tensor {
        let delta = self.config.patch;
        let mut data = Vec::with_capacity(windows.len() * delta);
        for w in windows {
            for j in 0..delta {
                data.push(w.at(p * delta + j, n));
            }
        }
        Tensor::matrix(windows.len(), delta, data).expect("patch shape")
    }

    /// Attention output for patch `p`, variable `n`: `B × d`. With scalar
    /// observations the score of observation `x` is `x · (T_pn W_Kᵀ) / √d_k`.
    fn attend(&self, g: &mut Graph, b: &Binding, x: Var, p: usize, n: usize) -> Result<Var> {
        let row = p * self.config.variables + n;
        let t = g.slice(b.var(self.pseudo), Axis::Rows, row, 1)?;
        let wk_t = g.transpose(b.var(self.w_k));
        let c = g.matmul(t, wk_t)?;
        let c = g.scale(c, 1.0 / (self.config.heads as f64).sqrt());
        let scores = g.mul_scalar(x, c)?;
        let attn = g.softmax(scores, Axis::Cols)?;
        let weighted = g.mul(attn, x)?;
        let pooled = g.sum_axis(weighted, Axis::Cols)?;
        g.matmul(pooled, b.var(self.w_v))
    }

    /// Locations for a batch of L×N subsequences: `B × N`.
    pub fn embed(&self, g: &mut Graph, b: &Binding, windows: &[Tensor]) -> Result<Var> {
        self.check_windows(windows)?;
        let bsz = windows.len();
        let mut parts = Vec::with_capacity(self.config.patches() * self.config.variables);
        for p in 0..self.config.patches() {
            for n in 0..self.config.variables {
                let x = g.constant(self.patch_inputs(windows, p, n));
                parts.push(self.attend(g, b, x, p, n)?);
            }
        }
        let mut h = g.concat(&parts, Axis::Cols)?;
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let z = g.matmul(h, b.var(layer.weight))?;
            let out = g.shape(z)[1];
            let bias = g.broadcast(b.var(layer.bias), &[bsz, out])?;
            let z = g.add(z, bias)?;
            h = if k == last { z } else { g.tanh(z) };
        }
        Ok(h)
    }

    pub fn embed_values(&self, store: &ParamStore, windows: &[Tensor]) -> Result<Tensor> {
        let mut g = Graph::new();
        let b = store.bind(&mut g);
        let h = self.embed(&mut g, &b, windows)?;
        Ok(g.value(h).clone())
    }

    pub fn embed_one(&self, store: &ParamStore, window: &Tensor) -> Result<Vec<f64>> {
        Ok(self
            .embed_values(store, std::slice::from_ref(window))?
            .into_data())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff::check::check_gradients;
    use crate::diff::{linalg, softmax_values};

    fn window(l: usize, n: usize, seed: f64) -> Tensor {
        let data = (0..l * n).map(|k| ((k as f64 + 1.0) * seed).sin() * 1.5).collect();
        Tensor::matrix(l, n, data).unwrap()
    }

    fn learner(l: usize, n: usize, patch: usize, seed: u64) -> (ParamStore, LocationLearner) {
        let mut store = ParamStore::new();
        let mut cfg = LocationConfig::new(l, n);
        cfg.patch = patch;
        let ll = LocationLearner::new(&mut store, "loc", cfg, seed).unwrap();
        (store, ll)
    }

    /// Literal attention: keys and values are δ×d matrices `M^n W_K`,
    /// `M^n W_V`; output `softmax(T (M W_K)ᵀ / √d_k) (M W_V)`.
    fn dense_attention(t: &Tensor, w_k: &Tensor, w_v: &Tensor, m: &[f64], heads: usize) -> Vec<f64> {
        let col = Tensor::column(m);
        let keys = linalg::matmul(&col, w_k).unwrap();
        let values = linalg::matmul(&col, w_v).unwrap();
        let scores = linalg::matmul(t, &keys.transpose()).unwrap();
        let scores = scores.map(|s| s / (heads as f64).sqrt());
        let attn = softmax_values(&scores, Axis::Cols);
        linalg::matmul(&attn, &values).unwrap().into_data()
    }

    #[test]
    fn default_patch_sizes() {
        assert_eq!(default_patch(12), 6);
        assert_eq!(default_patch(7), 1);
        assert_eq!(default_patch(1), 1);
        assert_eq!(default_patch(4), 2);
    }

    #[test]
    fn patch_must_divide_window() {
        let mut store = ParamStore::new();
        let mut cfg = LocationConfig::new(6, 1);
        cfg.patch = 4;
        assert!(matches!(
            LocationLearner::new(&mut store, "loc", cfg, 0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn attention_matches_dense_oracle() {
        for (l, n, patch) in [(4, 2, 2), (6, 3, 3), (4, 1, 1)] {
            let (store, ll) = learner(l, n, patch, 3);
            let windows = vec![window(l, n, 0.37), window(l, n, 1.9)];
            let mut g = Graph::new();
            let b = store.bind(&mut g);
            for p in 0..ll.config.patches() {
                for v in 0..n {
                    let x = g.constant(ll.patch_inputs(&windows, p, v));
                    let o = ll.attend(&mut g, &b, x, p, v).unwrap();
                    let t_row = Tensor::row(store.get(ll.pseudo).row_slice(p * n + v));
                    for (i, w) in windows.iter().enumerate() {
                        let m: Vec<f64> = (0..patch).map(|j| w.at(p * patch + j, v)).collect();
                        let expected =
                            dense_attention(&t_row, store.get(ll.w_k), store.get(ll.w_v), &m, 1);
                        for (a, e) in g.value(o).row_slice(i).iter().zip(&expected) {
                            assert!((a - e).abs() <= 1e-12 * (1.0 + e.abs()), "{a} vs {e}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn single_key_returns_value_projection() {
        let (store, ll) = learner(3, 1, 1, 5);
        let w = window(3, 1, 0.8);
        let mut g = Graph::new();
        let b = store.bind(&mut g);
        let x = g.constant(ll.patch_inputs(std::slice::from_ref(&w), 1, 0));
        let o = ll.attend(&mut g, &b, x, 1, 0).unwrap();
        let expected: Vec<f64> = store.get(ll.w_v).data().iter().map(|v| v * w.at(1, 0)).collect();
        assert_eq!(g.value(o).data(), &expected[..]);
    }

    #[test]
    fn identical_observations_split_attention_evenly() {
        let (store, ll) = learner(2, 1, 2, 1);
        let w = Tensor::matrix(2, 1, vec![0.7, 0.7]).unwrap();
        let x = ll.patch_inputs(std::slice::from_ref(&w), 0, 0);
        let t = store.get(ll.pseudo);
        let c = linalg::matmul(&Tensor::row(t.row_slice(0)), &store.get(ll.w_k).transpose()).unwrap();
        let scores = x.map(|v| v * c.item());
        let a = softmax_values(&scores, Axis::Cols);
        assert_eq!(a.data(), &[0.5, 0.5]);
    }

    #[test]
    fn zero_input_gives_zero_location() {
        let (store, ll) = learner(4, 2, 2, 9);
        let h = ll.embed_one(&store, &Tensor::zeros(&[4, 2])).unwrap();
        assert_eq!(h, vec![0.0, 0.0]);
    }

    #[test]
    fn batch_equals_loop_bitwise() {
        let (store, ll) = learner(6, 2, 3, 11);
        let windows: Vec<_> = (0..3).map(|i| window(6, 2, 0.3 + i as f64)).collect();
        let h = ll.embed_values(&store, &windows).unwrap();
        assert_eq!(h.shape(), &[3, 2]);
        for (i, w) in windows.iter().enumerate() {
            assert_eq!(h.row_slice(i), &ll.embed_one(&store, w).unwrap()[..]);
        }
    }

    #[test]
    fn duplicate_subsequences_share_locations() {
        let (store, ll) = learner(4, 1, 2, 2);
        let w = window(4, 1, 0.6);
        let h = ll.embed_values(&store, &[w.clone(), window(4, 1, 2.0), w]).unwrap();
        assert_eq!(h.row_slice(0), h.row_slice(2));
    }

    #[test]
    fn permuting_variables_permutes_locations() {
        let (l, n, patch, d) = (4, 2, 2, 8);
        let (store, ll) = learner(l, n, patch, 4);
        let w = window(l, n, 0.45);
        let h = ll.embed_one(&store, &w).unwrap();

        let mut swapped = Tensor::zeros(&[l, n]);
        for r in 0..l {
            swapped.set(r, 0, w.at(r, 1));
            swapped.set(r, 1, w.at(r, 0));
        }
        let mut permuted = store.clone();
        let pseudo = store.get(ll.pseudo);
        let mut t = pseudo.clone();
        for p in 0..ll.config.patches() {
            for v in 0..n {
                for j in 0..d {
                    t.set(p * n + v, j, pseudo.at(p * n + (1 - v), j));
                }
            }
        }
        permuted.set(ll.pseudo, t);
        // MLP input blocks follow (patch, variable) order
        let w0 = store.get(ll.layers[0].weight);
        let mut w0p = w0.clone();
        for p in 0..ll.config.patches() {
            for v in 0..n {
                for j in 0..d {
                    let src = (p * n + (1 - v)) * d + j;
                    let dst = (p * n + v) * d + j;
                    for c in 0..w0.cols() {
                        w0p.set(dst, c, w0.at(src, c));
                    }
                }
            }
        }
        permuted.set(ll.layers[0].weight, w0p);
        let w2 = store.get(ll.layers[2].weight);
        let mut w2p = w2.clone();
        for r in 0..w2.rows() {
            w2p.set(r, 0, w2.at(r, 1));
            w2p.set(r, 1, w2.at(r, 0));
        }
        permuted.set(ll.layers[2].weight, w2p);
        let hp = ll.embed_one(&permuted, &swapped).unwrap();
        assert!((hp[0] - h[1]).abs() < 1e-12 && (hp[1] - h[0]).abs() < 1e-12);
    }

    #[test]
    fn embedding_gradients_match_finite_differences() {
        let (store, ll) = learner(4, 2, 2, 6);
        let windows: Vec<_> = (0..3).map(|i| window(4, 2, 0.7 + 0.4 * i as f64)).collect();
        let probe = Tensor::matrix(3, 2, vec![0.3, -1.1, 0.8, 0.5, -0.4, 1.3]).unwrap();
        let rep = check_gradients(
            &store,
            |g, b| {
                let h = ll.embed(g, b, &windows)?;
                let w = g.constant(probe.clone());
                let s = g.mul(h, w)?;
                Ok(g.sum(s))
            },
            1e-5,
            |_| true,
        )
        .unwrap();
        assert!(rep.max_rel_err < 1e-4, "{rep:?}");
    }

    #[test]
    fn wrong_window_shape_is_rejected() {
        let (store, ll) = learner(4, 2, 2, 0);
        assert!(ll.embed_values(&store, &[Tensor::zeros(&[3, 2])]).is_err());
    }
}
