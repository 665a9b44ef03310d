//! Kernel association: symbolic structures, instantiated kernels, the
//! relaxed search space and the two structure-search strategies.

mod expr;
mod relaxed;
mod search;
mod structure;

pub use expr::{KernelExpr, Term};
pub use relaxed::{
    discretize, relaxed_inter_block, relaxed_intra_block, ArchWeights, RelaxedKernel, PLUS, SKIP,
};
pub use search::{greedy_search, kas_search, retrain_zeta, SearchBudget, SearchOutcome};
pub use structure::{canonical_text, monomial_text, KernelStructure, Monomial};

use serde::{Deserialize, Serialize};

use crate::diff::{Binding, Graph, ParamStore, Var};
use crate::error::Result;

/// The kernel a model is built around: either a discretized expression or
/// the relaxed search space used while KAS trains.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum CovKernel {
    Expr(KernelExpr),
    Relaxed(RelaxedKernel),
}

impl CovKernel {
    pub fn gram(&self, g: &mut Graph, b: &Binding, x: Var, y: Var) -> Result<Var> {
        match self {
            Self::Expr(e) => e.gram(g, b, x, y),
            Self::Relaxed(r) => r.gram(g, b, x, y),
        }
    }

    pub fn eval(&self, store: &ParamStore, x: f64, y: f64) -> f64 {
        match self {
            Self::Expr(e) => e.eval(store, x, y),
            Self::Relaxed(r) => r.eval(store, x, y),
        }
    }

    /// Canonical text of the expression, or of the current discretization
    /// for a relaxed kernel.
    pub fn describe(&self, store: &ParamStore) -> String {
        match self {
            Self::Expr(e) => e.canonical(),
            Self::Relaxed(r) => discretize(&r.arch(store)).canonical(),
        }
    }
}
