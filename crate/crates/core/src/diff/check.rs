//! Central finite-difference checks of graph gradients. The numeric side
//! only ever evaluates forward values, so it is independent of the reverse
//! sweep it checks.

use super::graph::{Graph, Var};
use super::params::{Binding, ParamStore};
use crate::error::Result;

/// Denominator floor for relative errors, so gradients that are zero up to
/// round-off do not dominate the report.
pub const REL_FLOOR: f64 = 1e-4;

#[derive(Clone, Debug)]
pub struct GradCheck {
    pub max_rel_err: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_FLOOR)
}

/// Compares reverse-mode gradients of `loss` against central differences
/// with step `h` for every unfrozen scalar whose name passes `filter`.
pub fn check_gradients<F>(
    store: &ParamStore,
    loss: F,
    h: f64,
    filter: impl Fn(&str) -> bool,
) -> Result<GradCheck>
where
    F: Fn(&mut Graph, &Binding) -> Result<Var>,
{
    let mut g = Graph::new();
    let b = store.bind(&mut g);
    let root = loss(&mut g, &b)?;
    let grads = g.backward(root)?;
    let analytic = store.collect_grads(&b, &grads);

    let eval = |s: &ParamStore| -> Result<f64> {
        let mut g = Graph::new();
        let b = s.bind(&mut g);
        let r = loss(&mut g, &b)?;
        Ok(g.value(r).item())
    };

    let mut report = GradCheck {
        max_rel_err: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
    };
    let mut probe = store.clone();
    for id in store.ids() {
        if store.is_frozen(id) || !filter(store.name(id)) {
            continue;
        }
        for k in 0..store.get(id).len() {
            let x0 = store.get(id).data()[k];
            probe.get_mut(id).data_mut()[k] = x0 + h;
            let fp = eval(&probe)?;
            probe.get_mut(id).data_mut()[k] = x0 - h;
            let fm = eval(&probe)?;
            probe.get_mut(id).data_mut()[k] = x0;
            let numeric = (fp - fm) / (2.0 * h);
            let a = analytic[id.0].data()[k];
            let err = relative_error(a, numeric);
            report.checked += 1;
            if err > report.max_rel_err || report.checked == 1 {
                report.max_rel_err = report.max_rel_err.max(err);
                if err >= report.max_rel_err {
                    report.worst_param = store.name(id).to_string();
                    report.worst_index = k;
                    report.analytic = a;
                    report.numeric = numeric;
                }
            }
        }
    }
    Ok(report)
}
