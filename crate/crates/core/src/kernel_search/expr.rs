use serde::{Deserialize, Serialize};

use super::structure::{canonical_text, KernelStructure, Monomial};
use crate::diff::{Binding, Graph, ParamId, ParamStore, Tensor, Var};
use crate::error::{Error, Result};
use crate::kernels::{init_params, BasicKernel, LocationSummary};

/// One weighted summand `ζ_s k_s` where `k_s` is a product of basic kernels,
/// each factor owning its own parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub log_zeta: ParamId,
    pub factors: Vec<BasicKernel>,
}

/// A discretized kernel `K = Σ_s ζ_s k_s` with learnable θ and ζ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelExpr {
    pub terms: Vec<Term>,
}

impl KernelExpr {
    /// Registers parameters for every monomial of `structure`; ζ starts at
    /// `1/S`.
    pub fn instantiate(
        structure: &KernelStructure,
        store: &mut ParamStore,
        prefix: &str,
        locations: &LocationSummary,
    ) -> Self {
        let monomials = structure.monomials();
        let zeta0 = 1.0 / monomials.len() as f64;
        let terms = monomials
            .iter()
            .enumerate()
            .map(|(s, m)| {
                let log_zeta = store.insert_scalar(format!("{prefix}.term{s}.log_zeta"), zeta0.ln());
                let factors = m
                    .iter()
                    .enumerate()
                    .map(|(f, &kind)| {
                        BasicKernel::register(
                            store,
                            &format!("{prefix}.term{s}.{}{f}", kind.name().to_lowercase()),
                            kind,
                            &init_params(kind, locations),
                        )
                    })
                    .collect();
                Term { log_zeta, factors }
            })
            .collect();
        Self { terms }
    }

    pub fn monomials(&self) -> Vec<Monomial> {
        self.terms
            .iter()
            .map(|t| {
                let mut m: Monomial = t.factors.iter().map(|f| f.kind).collect();
                m.sort();
                m
            })
            .collect()
    }

    pub fn structure(&self) -> KernelStructure {
        KernelStructure::from_monomials(&self.monomials())
    }

    pub fn canonical(&self) -> String {
        canonical_text(&self.monomials())
    }

    pub fn zetas(&self, store: &ParamStore) -> Vec<f64> {
        self.terms.iter().map(|t| store.scalar(t.log_zeta).exp()).collect()
    }

    pub fn eval(&self, store: &ParamStore, x: f64, y: f64) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                store.scalar(t.log_zeta).exp()
                    * t.factors.iter().map(|f| f.eval(store, x, y)).product::<f64>()
            })
            .sum()
    }

    pub fn gram_values(&self, store: &ParamStore, xs: &[f64], ys: &[f64]) -> Tensor {
        let mut data = Vec::with_capacity(xs.len() * ys.len());
        for &x in xs {
            for &y in ys {
                data.push(self.eval(store, x, y));
            }
        }
        Tensor::matrix(xs.len(), ys.len(), data).expect("gram shape")
    }

    /// Differentiable Gram matrix between a location column `x` (n×1) and a
    /// location row `y` (1×m).
    pub fn gram(&self, g: &mut Graph, b: &Binding, x: Var, y: Var) -> Result<Var> {
        if self.terms.is_empty() {
            return Err(Error::Model("kernel expression has no terms".into()));
        }
        let mut total: Option<Var> = None;
        for t in &self.terms {
            let mut prod: Option<Var> = None;
            for f in &t.factors {
                let k = f.gram(g, b, x, y)?;
                prod = Some(match prod {
                    None => k,
                    Some(p) => g.mul(p, k)?,
                });
            }
            let prod = prod.ok_or_else(|| Error::Model("empty kernel term".into()))?;
            let zeta = g.exp(b.var(t.log_zeta));
            let weighted = g.mul_scalar(prod, zeta)?;
            total = Some(match total {
                None => weighted,
                Some(s) => g.add(s, weighted)?,
            });
        }
        Ok(total.expect("non-empty"))
    }
}
