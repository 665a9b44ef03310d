//! Structure search drivers: differentiable KAS and greedy expansion.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::relaxed::discretize;
use super::structure::KernelStructure;
use super::CovKernel;
use crate::data::TimeSeriesMatrix;
use crate::error::{Error, Result};
use crate::forecaster::{validation_context, ForecastConfig, GpModel, KernelSetup, Prepared, TrainedModel};
use crate::kernels::BasicKernelKind;

/// Number of train-then-validate cycles a search consumed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchBudget {
    pub validation_count: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchOutcome {
    pub structure: KernelStructure,
    pub budget: SearchBudget,
    pub depth: usize,
    pub wall_time: Duration,
    /// One-step validation MSE (normalized scale) of the chosen structure.
    pub validation_loss: f64,
}

fn check_kinds(kinds: &[BasicKernelKind], order: usize) -> Result<()> {
    if kinds.is_empty() {
        return Err(Error::Config("basic kernel set is empty".into()));
    }
    if order == 0 {
        return Err(Error::Config("search depth R must be at least 1".into()));
    }
    let mut sorted = kinds.to_vec();
    sorted.sort();
    sorted.dedup();
    if sorted.len() != kinds.len() {
        return Err(Error::Config("basic kernel set contains duplicates".into()));
    }
    Ok(())
}

/// Trains the relaxed model (edge weights jointly with every other
/// parameter, on the training NLML), validates it once and discretizes.
/// Returns the trained relaxed model as a warm start for [`retrain_zeta`].
pub fn kas_search(
    train: &TimeSeriesMatrix,
    val: &TimeSeriesMatrix,
    kinds: &[BasicKernelKind],
    order: usize,
    cfg: &ForecastConfig,
) -> Result<(SearchOutcome, GpModel)> {
    check_kinds(kinds, order)?;
    let start = Instant::now();
    let prep = Prepared::new(train, &cfg.window)?;
    let context = validation_context(train, val, cfg.window.length)?;
    let setup = KernelSetup::Relaxed {
        kinds: kinds.to_vec(),
        order,
    };
    let model = prep.build(&setup, cfg)?;
    let (trained, _) = prep.fit(model, &cfg.train)?;
    let validation_loss = trained.one_step_mse(&context)?;
    let relaxed = trained.model;
    let structure = match &relaxed.kernel {
        CovKernel::Relaxed(r) => discretize(&r.arch(&relaxed.store)),
        CovKernel::Expr(e) => e.structure(),
    };
    log::info!("KAS selected {} (validation MSE {validation_loss:.6})", structure.canonical());
    Ok((
        SearchOutcome {
            structure,
            budget: SearchBudget { validation_count: 1 },
            depth: order,
            wall_time: start.elapsed(),
            validation_loss,
        },
        relaxed,
    ))
}

/// Fits the discretized structure with fresh weights `ζ_s = 1/S`. With a
/// warm start, the location learner, cross-variable weights and noise are
/// copied from it and every factor starts from the matching shared basic
/// kernel's parameters.
pub fn retrain_zeta(
    structure: &KernelStructure,
    train: &TimeSeriesMatrix,
    cfg: &ForecastConfig,
    warm: Option<&GpModel>,
) -> Result<(TrainedModel, Vec<f64>)> {
    let prep = Prepared::new(train, &cfg.window)?;
    let mut model = prep.build(&KernelSetup::Fixed(structure.clone()), cfg)?;
    if let Some(w) = warm {
        model.copy_matching(&w.store);
        if let (CovKernel::Expr(expr), CovKernel::Relaxed(relaxed)) = (&model.kernel, &w.kernel) {
            for term in &expr.terms {
                for f in &term.factors {
                    if let Some(src) = relaxed.kernels.iter().find(|k| k.kind == f.kind) {
                        let p = src.params(&w.store);
                        f.set_params(&mut model.store, &p);
                    }
                }
            }
        }
    }
    prep.fit(model, &cfg.train)
}

fn add(a: &KernelStructure, b: &KernelStructure) -> KernelStructure {
    KernelStructure::Sum(vec![a.clone(), b.clone()])
}

/// Greedy expansion. Iteration 1 starts from a randomly drawn basic kernel
/// and tries `K + k_i` for every other basic kernel; later iterations expand
/// every term selected in the previous iteration (or the most recent
/// non-empty selection) with each `(+, ×) × 𝒦` pair and try `K + candidate`.
/// Candidates are checked in a fixed order against the current `K`, each
/// trained from scratch, and accepted only on a strict drop of the
/// validation loss.
pub fn greedy_search(
    train: &TimeSeriesMatrix,
    val: &TimeSeriesMatrix,
    kinds: &[BasicKernelKind],
    order: usize,
    cfg: &ForecastConfig,
) -> Result<(SearchOutcome, TrainedModel, Vec<f64>)> {
    check_kinds(kinds, order)?;
    let start = Instant::now();
    let prep = Prepared::new(train, &cfg.window)?;
    let context = validation_context(train, val, cfg.window.length)?;
    let mut count = 0usize;
    let mut evaluate = |s: &KernelStructure| -> Result<(f64, TrainedModel, Vec<f64>)> {
        let model = prep.build(&KernelSetup::Fixed(s.clone()), cfg)?;
        let (trained, losses) = prep.fit(model, &cfg.train)?;
        count += 1;
        let v = trained.one_step_mse(&context)?;
        log::debug!("greedy candidate {}: validation MSE {v:.6}", s.canonical());
        Ok((v, trained, losses))
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let seed_kind = kinds[rng.gen_range(0..kinds.len())];
    let mut k = KernelStructure::Basic(seed_kind);
    let (mut best_loss, mut best_model, mut best_losses) = evaluate(&k)?;

    let mut selected = vec![k.clone()];
    for &ki in kinds.iter().filter(|&&ki| ki != seed_kind) {
        let cand = add(&k, &KernelStructure::Basic(ki));
        let (v, m, l) = evaluate(&cand)?;
        if v < best_loss {
            k = cand;
            (best_loss, best_model, best_losses) = (v, m, l);
            selected.push(KernelStructure::Basic(ki));
        }
    }

    let mut frontier = selected;
    for _ in 1..order {
        let mut chosen = Vec::new();
        for base in &frontier {
            for product in [false, true] {
                for &ki in kinds {
                    let leaf = KernelStructure::Basic(ki);
                    let term = if product {
                        KernelStructure::Product(vec![base.clone(), leaf])
                    } else {
                        KernelStructure::Sum(vec![base.clone(), leaf])
                    };
                    let cand = add(&k, &term);
                    let (v, m, l) = evaluate(&cand)?;
                    if v < best_loss {
                        k = cand;
                        (best_loss, best_model, best_losses) = (v, m, l);
                        chosen.push(term);
                    }
                }
            }
        }
        if !chosen.is_empty() {
            frontier = chosen;
        }
    }

    let structure = KernelStructure::from_monomials(&k.monomials());
    log::info!("greedy selected {} after {count} validations", structure.canonical());
    Ok((
        SearchOutcome {
            structure,
            budget: SearchBudget {
                validation_count: count,
            },
            depth: order,
            wall_time: start.elapsed(),
            validation_loss: best_loss,
        },
        best_model,
        best_losses,
    ))
}
