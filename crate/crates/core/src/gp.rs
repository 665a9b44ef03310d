//! Zero-mean GP regression: negative log marginal likelihood, jittered
//! Cholesky factorisation and the predictive posterior.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::diff::{linalg, Graph, ParamId, ParamStore, Tensor, Var};
use crate::error::{Error, Result};

pub const JITTER_MIN: f64 = 1e-8;
pub const JITTER_MAX: f64 = 1e-4;

fn jitter_ladder() -> impl Iterator<Item = f64> {
    (0..=4).map(|k| JITTER_MIN * 10f64.powi(k))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub raw_log_sigma2: ParamId,
}

impl NoiseModel {
    pub fn new(store: &mut ParamStore, prefix: &str, sigma2: f64) -> Self {
        Self {
            raw_log_sigma2: store.insert_scalar(format!("{prefix}.log_sigma2"), sigma2.ln()),
        }
    }

    pub fn sigma2(&self, store: &ParamStore) -> f64 {
        store.scalar(self.raw_log_sigma2).exp()
    }
}

fn diag_range(a: &Tensor) -> (f64, f64) {
    let n = a.rows();
    (0..n).map(|i| a.at(i, i)).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| {
        (lo.min(d), hi.max(d))
    })
}

fn singular(a: &Tensor) -> Error {
    let (min_diag, max_diag) = diag_range(a);
    Error::SingularCovariance {
        jitter: JITTER_MAX,
        size: a.rows(),
        min_diag,
        max_diag,
    }
}

/// Cholesky factor of `A + jI`, escalating `j` from 1e-8 to 1e-4 by decades.
/// Returns the factor and the jitter that succeeded.
pub fn jittered_cholesky(a: &Tensor) -> Result<(Tensor, f64)> {
    linalg::check_symmetric(a)?;
    for j in jitter_ladder() {
        let mut aj = a.clone();
        for i in 0..a.rows() {
            aj.set(i, i, a.at(i, i) + j);
        }
        match linalg::cholesky(&aj) {
            Ok(l) => return Ok((l, j)),
            Err(Error::NotPositiveDefinite { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(singular(a))
}

/// Differentiable `½[yᵀ(K+σ²I)⁻¹y + log det(K+σ²I) + n log 2π]` for a column
/// `y`, with the same jitter escalation as [`jittered_cholesky`].
pub fn nlml(g: &mut Graph, k: Var, y: Var, sigma2: Var) -> Result<Var> {
    let n = g.shape(k)[0];
    if g.shape(y) != [n, 1] {
        return Err(Error::shape(
            "nlml",
            format!("K is {:?} but y is {:?}", g.shape(k), g.shape(y)),
        ));
    }
    for j in jitter_ladder() {
        let s = g.add_const(sigma2, j);
        let kn = g.add_diag(k, s)?;
        let l = match g.cholesky(kn) {
            Ok(l) => l,
            Err(Error::NotPositiveDefinite { .. }) => continue,
            Err(e) => return Err(e),
        };
        let a = g.triangular_solve(l, y, false)?;
        let sq = g.square(a);
        let quad = g.sum(sq);
        let logdet = g.logdet_from_cholesky(l)?;
        let total = g.add(quad, logdet)?;
        let half = g.scale(total, 0.5);
        return Ok(g.add_const(half, 0.5 * n as f64 * (2.0 * PI).ln()));
    }
    let mut kn = g.value(k).clone();
    let s2 = g.value(sigma2).item();
    for i in 0..n {
        kn.set(i, i, kn.at(i, i) + s2);
    }
    Err(singular(&kn))
}

pub fn nlml_value(k: &Tensor, y: &[f64], sigma2: f64) -> Result<f64> {
    let mut g = Graph::new();
    let kv = g.constant(k.clone());
    let yv = g.constant(Tensor::column(y));
    let s = g.scalar_constant(sigma2);
    let r = nlml(&mut g, kv, yv, s)?;
    Ok(g.value(r).item())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Posterior {
    pub mean: Vec<f64>,
    pub cov: Tensor,
}

impl Posterior {
    /// Square roots of the (clamped non-negative) marginal variances.
    pub fn std(&self) -> Vec<f64> {
        (0..self.cov.rows())
            .map(|i| self.cov.at(i, i).max(0.0).sqrt())
            .collect()
    }
}

/// Factorised training covariance, reused for every prediction.
#[derive(Clone, Debug, PartialEq)]
pub struct GpCache {
    pub chol: Tensor,
    /// `(K + σ²I)⁻¹ y`.
    pub alpha: Vec<f64>,
    pub jitter: f64,
}

impl GpCache {
    pub fn new(k_tt: &Tensor, y: &[f64], sigma2: f64) -> Result<Self> {
        if k_tt.rows() != y.len() {
            return Err(Error::shape(
                "posterior",
                format!("K_tt is {:?} but y has {} entries", k_tt.shape(), y.len()),
            ));
        }
        let mut kn = k_tt.clone();
        for i in 0..kn.rows() {
            kn.set(i, i, kn.at(i, i) + sigma2);
        }
        let (chol, jitter) = jittered_cholesky(&kn)?;
        let z = linalg::solve_lower(&chol, &Tensor::column(y))?;
        let alpha = linalg::solve_lower_transpose(&chol, &z)?.into_data();
        Ok(Self { chol, alpha, jitter })
    }

    pub fn predict(&self, k_st: &Tensor, k_ss: &Tensor) -> Result<Posterior> {
        let n = self.alpha.len();
        let m = k_ss.rows();
        if k_st.shape() != [m, n] || k_ss.cols() != m {
            return Err(Error::shape(
                "posterior",
                format!("K_st {:?}, K_ss {:?}, {n} training points", k_st.shape(), k_ss.shape()),
            ));
        }
        let mean = (0..m)
            .map(|i| k_st.row_slice(i).iter().zip(&self.alpha).map(|(a, b)| a * b).sum())
            .collect();
        let v = linalg::solve_lower(&self.chol, &k_st.transpose())?;
        let mut cov = k_ss.clone();
        for i in 0..m {
            for j in 0..m {
                let mut s = 0.0;
                for r in 0..n {
                    s += v.at(r, i) * v.at(r, j);
                }
                cov.set(i, j, cov.at(i, j) - s);
            }
        }
        Ok(Posterior { mean, cov })
    }
}

/// Posterior of the latent function at test inputs given training targets,
/// with zero prior mean.
pub fn posterior(k_tt: &Tensor, k_st: &Tensor, k_ss: &Tensor, y: &[f64], sigma2: f64) -> Result<Posterior> {
    GpCache::new(k_tt, y, sigma2)?.predict(k_st, k_ss)
}
