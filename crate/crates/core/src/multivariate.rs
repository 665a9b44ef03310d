//! Multivariate covariance `K = D ⊙ C`: a shared kernel over all
//! (variable, subsequence) locations, scaled per variable pair by the
//! low-rank-plus-diagonal weight matrix `D = D′D′ᵀ + diag(softplus(λ))`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::diff::{linalg, softplus, Axis, Binding, Graph, ParamId, ParamStore, Tensor, Var};
use crate::error::{Error, Result};
use crate::kernel_search::CovKernel;

/// `max(1, ⌊N/4⌋)`.
pub fn default_rank(n: usize) -> usize {
    (n / 4).max(1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossVariableWeights {
    pub variables: usize,
    pub rank: usize,
    /// `N × V`.
    pub d_prime: ParamId,
    /// `N × 1`, passed through softplus.
    pub raw_lambda: ParamId,
}

impl CrossVariableWeights {
    /// `D′ ~ N(0, 0.1²)`, `λ = 1`.
    pub fn new(store: &mut ParamStore, prefix: &str, variables: usize, rank: usize, seed: u64) -> Result<Self> {
        if variables == 0 || rank == 0 {
            return Err(Error::Config("cross-variable weights need N ≥ 1 and V ≥ 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dist = Normal::new(0.0, 0.1).expect("positive std");
        let data = (0..variables * rank).map(|_| dist.sample(&mut rng)).collect();
        let d_prime = store.insert(format!("{prefix}.d_prime"), Tensor::matrix(variables, rank, data)?);
        let raw = (std::f64::consts::E - 1.0).ln();
        let raw_lambda = store.insert(format!("{prefix}.raw_lambda"), Tensor::full(&[variables, 1], raw));
        Ok(Self {
            variables,
            rank,
            d_prime,
            raw_lambda,
        })
    }

    /// Sets `D′ = 0` and freezes it, leaving independent per-variable GPs
    /// scaled by λ.
    pub fn decouple(&self, store: &mut ParamStore) {
        store.set(self.d_prime, Tensor::zeros(&[self.variables, self.rank]));
        store.freeze(self.d_prime);
    }

    pub fn lambda(&self, store: &ParamStore) -> Vec<f64> {
        store.get(self.raw_lambda).data().iter().map(|&r| softplus(r)).collect()
    }

    /// Numeric `D`.
    pub fn matrix(&self, store: &ParamStore) -> Tensor {
        let dp = store.get(self.d_prime);
        let mut d = linalg::matmul(dp, &dp.transpose()).expect("D′ shape");
        for (i, l) in self.lambda(store).into_iter().enumerate() {
            d.set(i, i, d.at(i, i) + l);
        }
        d
    }

    pub fn graph(&self, g: &mut Graph, b: &Binding) -> Result<Var> {
        let n = self.variables;
        let dp = b.var(self.d_prime);
        let dpt = g.transpose(dp);
        let low = g.matmul(dp, dpt)?;
        let lam = g.softplus(b.var(self.raw_lambda));
        let lam = g.broadcast(lam, &[n, n])?;
        let eye = g.constant(Tensor::eye(n));
        let diag = g.mul(lam, eye)?;
        g.add(low, diag)
    }
}

/// Locations `B × N` stacked variable-major into an `(N·B) × 1` column.
pub fn stack_locations(g: &mut Graph, h: Var) -> Result<Var> {
    let n = g.shape(h)[1];
    let cols = (0..n)
        .map(|m| g.slice(h, Axis::Cols, m, 1))
        .collect::<Result<Vec<_>>>()?;
    g.concat(&cols, Axis::Rows)
}

/// `(N·B) × N` indicator with a one where row block `m` meets column `m`.
pub fn block_indicator(n: usize, b: usize) -> Tensor {
    let mut e = Tensor::zeros(&[n * b, n]);
    for m in 0..n {
        for i in 0..b {
            e.set(m * b + i, m, 1.0);
        }
    }
    e
}

/// `C` for locations `ha` (`Ba × N`) against `hb` (`Bb × N`): entry
/// `(m·Ba + i, n·Bb + j)` is `K(h_i^m, h_j^n)`.
pub fn shared_covariance(g: &mut Graph, b: &Binding, kernel: &CovKernel, ha: Var, hb: Var) -> Result<Var> {
    let za = stack_locations(g, ha)?;
    let zb = stack_locations(g, hb)?;
    let zb = g.transpose(zb);
    kernel.gram(g, b, za, zb)
}

/// `K = (E_a D E_bᵀ) ⊙ C`.
pub fn assemble_k(g: &mut Graph, d: Var, c: Var, ba: usize, bb: usize) -> Result<Var> {
    let n = g.shape(d)[0];
    let ea = g.constant(block_indicator(n, ba));
    let eb = g.constant(block_indicator(n, bb).transpose());
    let left = g.matmul(ea, d)?;
    let big = g.matmul(left, eb)?;
    g.mul(big, c)
}

/// Full multivariate covariance between two location sets.
pub fn covariance(
    g: &mut Graph,
    b: &Binding,
    kernel: &CovKernel,
    weights: &CrossVariableWeights,
    ha: Var,
    hb: Var,
) -> Result<Var> {
    let (ba, bb) = (g.shape(ha)[0], g.shape(hb)[0]);
    let c = shared_covariance(g, b, kernel, ha, hb)?;
    let d = weights.graph(g, b)?;
    assemble_k(g, d, c, ba, bb)
}

/// Numeric covariance between two location matrices.
pub fn covariance_values(
    store: &ParamStore,
    kernel: &CovKernel,
    weights: &CrossVariableWeights,
    ha: &Tensor,
    hb: &Tensor,
) -> Result<Tensor> {
    let mut g = Graph::new();
    let b = store.bind(&mut g);
    let a = g.constant(ha.clone());
    let bv = g.constant(hb.clone());
    let k = covariance(&mut g, &b, kernel, weights, a, bv)?;
    Ok(g.value(k).clone())
}

/// Block `C^{m,n}` (`B × B`) of the shared covariance on locations `h`.
pub fn shared_block(store: &ParamStore, kernel: &CovKernel, h: &Tensor, m: usize, n: usize) -> Result<Tensor> {
    if m >= h.cols() || n >= h.cols() {
        return Err(Error::Config(format!(
            "variable pair ({m}, {n}) out of range for {} variables",
            h.cols()
        )));
    }
    let bsz = h.rows();
    let mut out = Tensor::zeros(&[bsz, bsz]);
    for i in 0..bsz {
        for j in 0..bsz {
            out.set(i, j, kernel.eval(store, h.at(i, m), h.at(j, n)));
        }
    }
    Ok(out)
}

/// The learned `D`; larger `|d_{m,n}|` means variable `n` matters more to `m`.
pub fn variable_importance(store: &ParamStore, weights: &CrossVariableWeights) -> Tensor {
    weights.matrix(store)
}

/// The `⌈fraction·N⌉` variables ranked by `|d_{target,·}|`, always including
/// `target`; ties go to the lower index. Returned in ascending index order.
pub fn select_top_variables(importance: &Tensor, target: usize, fraction: f64) -> Result<Vec<usize>> {
    let n = importance.rows();
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!("fraction must lie in (0, 1], got {fraction}")));
    }
    if target >= n {
        return Err(Error::Config(format!("target variable {target} out of range for {n}")));
    }
    let k = ((fraction * n as f64).ceil() as usize).clamp(1, n);
    let mut others: Vec<usize> = (0..n).filter(|&j| j != target).collect();
    others.sort_by(|&a, &b| {
        importance
            .at(target, b)
            .abs()
            .total_cmp(&importance.at(target, a).abs())
            .then(a.cmp(&b))
    });
    let mut chosen = vec![target];
    chosen.extend(others.into_iter().take(k - 1));
    chosen.sort_unstable();
    Ok(chosen)
}
