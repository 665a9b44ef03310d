//! Continuous relaxation of kernel association: softmax-weighted `{+, skip}`
//! edges inside each order block and between blocks and the final kernel.

use serde::{Deserialize, Serialize};

use super::structure::KernelStructure;
use crate::diff::{softmax_values, Axis, Binding, Graph, ParamId, ParamStore, Tensor, Var};
use crate::error::{Error, Result};
use crate::kernels::{init_params, BasicKernel, BasicKernelKind, LocationSummary};

/// Column of the `+` edge in α and β; the `skip` edge is column 1.
pub const PLUS: usize = 0;
pub const SKIP: usize = 1;

/// Edge logits: `alpha` is `(R·|𝒦|) × 2` with row `r·|𝒦| + i` holding the
/// edges between basic kernel `i` and block `r`; `beta` is `R × 2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchWeights {
    pub kinds: Vec<BasicKernelKind>,
    pub order: usize,
    pub alpha: Tensor,
    pub beta: Tensor,
}

impl ArchWeights {
    pub fn uniform(kinds: &[BasicKernelKind], order: usize) -> Self {
        Self {
            kinds: kinds.to_vec(),
            order,
            alpha: Tensor::zeros(&[order * kinds.len(), 2]),
            beta: Tensor::zeros(&[order, 2]),
        }
    }

    /// The `|𝒦| × 2` slice of α for block `r`.
    pub fn alpha_block(&self, r: usize) -> Tensor {
        let k = self.kinds.len();
        let data = self.alpha.data()[r * k * 2..(r + 1) * k * 2].to_vec();
        Tensor::matrix(k, 2, data).expect("alpha block")
    }

    fn selects_plus(logits: &[f64]) -> bool {
        logits[PLUS] >= logits[SKIP]
    }

    /// Basic kernels whose `+` edge wins in block `r` (ties keep the kernel).
    pub fn selected(&self, r: usize) -> Vec<BasicKernelKind> {
        let a = self.alpha_block(r);
        self.kinds
            .iter()
            .enumerate()
            .filter(|(i, _)| Self::selects_plus(a.row_slice(*i)))
            .map(|(_, &k)| k)
            .collect()
    }

    pub fn block_selected(&self, r: usize) -> bool {
        Self::selects_plus(self.beta.row_slice(r))
    }
}

/// `k^r = k^{r−1} · Σ_i softmax(α_i^r)[+] k_i` for one location pair.
pub fn relaxed_intra_block(alpha_r: &Tensor, basic_values: &[f64], prev: f64) -> f64 {
    let w = softmax_values(alpha_r, Axis::Cols);
    let sum: f64 = basic_values
        .iter()
        .enumerate()
        .map(|(i, v)| w.at(i, PLUS) * v)
        .sum();
    prev * sum
}

/// `K = Σ_r softmax(β^r)[+] k^r` for one location pair.
pub fn relaxed_inter_block(beta: &Tensor, block_values: &[f64]) -> f64 {
    let w = softmax_values(beta, Axis::Cols);
    block_values
        .iter()
        .enumerate()
        .map(|(r, v)| w.at(r, PLUS) * v)
        .sum()
}

/// Picks the arg-max edge everywhere and returns the undistributed kernel
/// `Σ_{selected r} Π_{q ≤ r} (Σ_{selected i} k_i)`. A block with no selected
/// kernel is identically zero, which also zeroes every later block. If
/// nothing survives the result is `SE`.
pub fn discretize(arch: &ArchWeights) -> KernelStructure {
    let mut chain: Vec<KernelStructure> = Vec::new();
    let mut terms: Vec<KernelStructure> = Vec::new();
    for r in 0..arch.order {
        let selected = arch.selected(r);
        if selected.is_empty() {
            break;
        }
        let block = if selected.len() == 1 {
            KernelStructure::Basic(selected[0])
        } else {
            KernelStructure::Sum(selected.into_iter().map(KernelStructure::Basic).collect())
        };
        chain.push(block);
        if arch.block_selected(r) {
            terms.push(if chain.len() == 1 {
                chain[0].clone()
            } else {
                KernelStructure::Product(chain.clone())
            });
        }
    }
    match terms.len() {
        0 => KernelStructure::Basic(BasicKernelKind::SE),
        1 => terms.pop().unwrap(),
        _ => KernelStructure::Sum(terms),
    }
}

/// Trainable relaxed kernel. Each basic kernel instance is shared by every
/// block, so block `r` multiplies the same `k_i` that earlier blocks used.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelaxedKernel {
    pub kinds: Vec<BasicKernelKind>,
    pub kernels: Vec<BasicKernel>,
    pub order: usize,
    pub alpha: ParamId,
    pub beta: ParamId,
}

impl RelaxedKernel {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        kinds: &[BasicKernelKind],
        order: usize,
        locations: &LocationSummary,
    ) -> Result<Self> {
        if kinds.is_empty() {
            return Err(Error::Config("basic kernel set is empty".into()));
        }
        if order == 0 {
            return Err(Error::Config("search depth R must be at least 1".into()));
        }
        let kernels = kinds
            .iter()
            .map(|&k| {
                BasicKernel::register(
                    store,
                    &format!("{prefix}.{}", k.name().to_lowercase()),
                    k,
                    &init_params(k, locations),
                )
            })
            .collect();
        let arch = ArchWeights::uniform(kinds, order);
        let alpha = store.insert(format!("{prefix}.alpha"), arch.alpha);
        let beta = store.insert(format!("{prefix}.beta"), arch.beta);
        Ok(Self {
            kinds: kinds.to_vec(),
            kernels,
            order,
            alpha,
            beta,
        })
    }

    pub fn arch(&self, store: &ParamStore) -> ArchWeights {
        ArchWeights {
            kinds: self.kinds.clone(),
            order: self.order,
            alpha: store.get(self.alpha).clone(),
            beta: store.get(self.beta).clone(),
        }
    }

    /// Value of the basic kernel of `kind` shared across blocks.
    pub fn basic_value(&self, store: &ParamStore, kind: BasicKernelKind, x: f64, y: f64) -> f64 {
        self.kernels
            .iter()
            .find(|k| k.kind == kind)
            .map_or(0.0, |k| k.eval(store, x, y))
    }

    pub fn eval(&self, store: &ParamStore, x: f64, y: f64) -> f64 {
        let arch = self.arch(store);
        let values: Vec<f64> = self.kernels.iter().map(|k| k.eval(store, x, y)).collect();
        let mut prev = 1.0;
        let mut blocks = Vec::with_capacity(self.order);
        for r in 0..self.order {
            prev = relaxed_intra_block(&arch.alpha_block(r), &values, prev);
            blocks.push(prev);
        }
        relaxed_inter_block(&arch.beta, &blocks)
    }

    pub fn gram(&self, g: &mut Graph, b: &Binding, x: Var, y: Var) -> Result<Var> {
        let grams = self
            .kernels
            .iter()
            .map(|k| k.gram(g, b, x, y))
            .collect::<Result<Vec<_>>>()?;
        let wa = g.softmax(b.var(self.alpha), Axis::Cols)?;
        let wb = g.softmax(b.var(self.beta), Axis::Cols)?;
        let nk = self.kernels.len();
        let mut prev: Option<Var> = None;
        let mut total: Option<Var> = None;
        for r in 0..self.order {
            let mut block: Option<Var> = None;
            for (i, &k) in grams.iter().enumerate() {
                let w = g.entry(wa, r * nk + i, PLUS)?;
                let term = g.mul_scalar(k, w)?;
                block = Some(match block {
                    None => term,
                    Some(s) => g.add(s, term)?,
                });
            }
            let block = block.expect("non-empty kernel set");
            let kr = match prev {
                None => block,
                Some(p) => g.mul(p, block)?,
            };
            prev = Some(kr);
            let w = g.entry(wb, r, PLUS)?;
            let term = g.mul_scalar(kr, w)?;
            total = Some(match total {
                None => term,
                Some(s) => g.add(s, term)?,
            });
        }
        Ok(total.expect("order >= 1"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use BasicKernelKind::*;

    fn logits(rows: &[[f64; 2]]) -> Tensor {
        Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn summary() -> LocationSummary {
        LocationSummary {
            min: -2.0,
            max: 2.0,
            mean: 0.0,
        }
    }

    #[test]
    fn uniform_block_halves() {
        let a = logits(&[[0.0, 0.0], [0.0, 0.0]]);
        assert!((relaxed_intra_block(&a, &[1.0, 1.0], 1.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn all_skip_block_vanishes() {
        let a = logits(&[[-40.0, 40.0], [-40.0, 40.0]]);
        assert!(relaxed_intra_block(&a, &[0.8, 1.3], 1.0).abs() < 1e-30);
    }

    #[test]
    fn second_block_multiplies_first() {
        let mut store = ParamStore::new();
        let rk = RelaxedKernel::new(&mut store, "kas", &[SE, PER], 2, &summary()).unwrap();
        // block 1 keeps only SE, block 2 keeps only PER, only block 2 reaches K
        store.set(rk.alpha, logits(&[[40.0, -40.0], [-40.0, 40.0], [-40.0, 40.0], [40.0, -40.0]]));
        store.set(rk.beta, logits(&[[-40.0, 40.0], [40.0, -40.0]]));
        for (x, y) in [(0.0, 0.5), (1.2, -0.7), (2.0, 2.0)] {
            let direct = rk.basic_value(&store, SE, x, y) * rk.basic_value(&store, PER, x, y);
            assert!((rk.eval(&store, x, y) - direct).abs() < 1e-12);
        }
        assert_eq!(discretize(&rk.arch(&store)).canonical(), "SE*PER");
    }

    #[test]
    fn inter_block_weights() {
        let b = logits(&[[0.0, 0.0], [0.0, 0.0]]);
        assert!((relaxed_inter_block(&b, &[2.0, 4.0]) - 3.0).abs() < 1e-15);
        let b = logits(&[[10.0, -10.0]]);
        assert!((relaxed_inter_block(&b, &[2.0]) - 2.0).abs() < 1e-8);
        let b = logits(&[[0.3, -0.2], [-40.0, 40.0]]);
        let w = 1.0 / (1.0 + (-0.5f64).exp());
        assert!((relaxed_inter_block(&b, &[2.0, 5.0]) - 2.0 * w).abs() < 1e-15);
    }

    #[test]
    fn discretize_single_kernel() {
        let arch = ArchWeights {
            kinds: vec![SE, PER],
            order: 1,
            alpha: logits(&[[0.7, 0.3], [0.2, 0.8]]),
            beta: logits(&[[0.9, 0.1]]),
        };
        assert_eq!(discretize(&arch), KernelStructure::Basic(SE));
    }

    #[test]
    fn discretize_distributes_two_blocks() {
        let arch = ArchWeights {
            kinds: vec![SE, PER, LIN],
            order: 2,
            alpha: logits(&[[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0], [0.0, 1.0], [1.0, 0.0]]),
            beta: logits(&[[1.0, 0.0], [1.0, 0.0]]),
        };
        assert_eq!(discretize(&arch).canonical(), "SE + PER + SE*LIN + PER*LIN");
    }

    #[test]
    fn discretize_falls_back_to_se() {
        let arch = ArchWeights {
            kinds: vec![PER, LIN],
            order: 2,
            alpha: Tensor::zeros(&[4, 2]),
            beta: logits(&[[0.0, 1.0], [0.0, 2.0]]),
        };
        assert_eq!(discretize(&arch), KernelStructure::Basic(SE));
    }

    #[test]
    fn ties_keep_kernels() {
        let arch = ArchWeights::uniform(&[SE, RQ], 1);
        assert_eq!(discretize(&arch).canonical(), "SE + RQ");
    }

    #[test]
    fn empty_block_zeroes_later_blocks() {
        let arch = ArchWeights {
            kinds: vec![SE],
            order: 3,
            alpha: logits(&[[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]]),
            beta: logits(&[[1.0, 0.0], [1.0, 0.0], [1.0, 0.0]]),
        };
        assert_eq!(discretize(&arch).canonical(), "SE");
    }
}
