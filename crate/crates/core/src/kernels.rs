//! Basic kernel functions (SE, PER, LIN, RQ) on scalar locations.
//!
//! Positive parameters are stored as logarithms. Distances inside SE and RQ
//! are squared Euclidean distances.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::diff::{Binding, Graph, ParamId, ParamStore, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BasicKernelKind {
    SE,
    PER,
    LIN,
    RQ,
}

impl BasicKernelKind {
    pub const ALL: [BasicKernelKind; 4] = [Self::SE, Self::PER, Self::LIN, Self::RQ];

    pub fn name(self) -> &'static str {
        match self {
            Self::SE => "SE",
            Self::PER => "PER",
            Self::LIN => "LIN",
            Self::RQ => "RQ",
        }
    }

    /// SE, PER and RQ are bounded by σ_k² and equal it at zero distance.
    pub fn is_stationary(self) -> bool {
        !matches!(self, Self::LIN)
    }
}

impl fmt::Display for BasicKernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BasicKernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "SE" => Ok(Self::SE),
            "PER" => Ok(Self::PER),
            "LIN" => Ok(Self::LIN),
            "RQ" => Ok(Self::RQ),
            other => Err(Error::Config(format!("unknown basic kernel '{other}'"))),
        }
    }
}

/// Natural-scale view of a basic kernel's parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub raw_log_sigma_k: f64,
    pub raw_log_l: f64,
    pub raw_log_p: f64,
    pub c: f64,
    pub raw_log_a: f64,
}

impl Default for KernelParams {
    fn default() -> Self {
        Self {
            raw_log_sigma_k: 0.0,
            raw_log_l: 0.0,
            raw_log_p: 0.0,
            c: 0.0,
            raw_log_a: 0.0,
        }
    }
}

impl KernelParams {
    pub fn from_natural(sigma_k: f64, l: f64, p: f64, c: f64, a: f64) -> Self {
        Self {
            raw_log_sigma_k: sigma_k.ln(),
            raw_log_l: l.ln(),
            raw_log_p: p.ln(),
            c,
            raw_log_a: a.ln(),
        }
    }

    pub fn sigma_k(&self) -> f64 {
        self.raw_log_sigma_k.exp()
    }

    pub fn l(&self) -> f64 {
        self.raw_log_l.exp()
    }

    pub fn p(&self) -> f64 {
        self.raw_log_p.exp()
    }

    pub fn a(&self) -> f64 {
        self.raw_log_a.exp()
    }
}

pub fn eval_basic(kind: BasicKernelKind, params: &KernelParams, xi: f64, xj: f64) -> f64 {
    let s2 = params.sigma_k().powi(2);
    let d = xi - xj;
    match kind {
        BasicKernelKind::SE => s2 * (-d * d / (2.0 * params.l().powi(2))).exp(),
        BasicKernelKind::PER => {
            let s = (PI * d.abs() / params.p()).sin();
            s2 * (-2.0 * s * s / params.l().powi(2)).exp()
        }
        BasicKernelKind::LIN => s2 * ((xi - params.c) * (xj - params.c)),
        BasicKernelKind::RQ => {
            let a = params.a();
            s2 * (1.0 + d * d / (2.0 * a * params.l().powi(2))).powf(-a)
        }
    }
}

/// `|RQ(x_i, x_j) − SE(x_i, x_j)|` for shared σ_k and l; vanishes as `a → ∞`.
pub fn rq_limit_check(params: &KernelParams, xi: f64, xj: f64) -> f64 {
    let rq = eval_basic(BasicKernelKind::RQ, params, xi, xj);
    let se = eval_basic(BasicKernelKind::SE, params, xi, xj);
    (rq - se).abs()
}

/// Range and mean of a set of locations, used to seed PER's period and LIN's
/// offset.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocationSummary {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

impl LocationSummary {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self {
                min: 0.0,
                max: 1.0,
                mean: 0.5,
            };
        }
        let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        Self { min, max, mean }
    }
}

/// Initial parameters: σ_k = 1, l = 1, a = 1, p = range / 4, c = mean.
pub fn init_params(kind: BasicKernelKind, locations: &LocationSummary) -> KernelParams {
    let range = locations.max - locations.min;
    let p = if range > 1e-6 { range / 4.0 } else { 1.0 };
    let mut params = KernelParams::default();
    match kind {
        BasicKernelKind::PER => params.raw_log_p = p.ln(),
        BasicKernelKind::LIN => params.c = locations.mean,
        BasicKernelKind::SE | BasicKernelKind::RQ => {}
    }
    params
}

/// Gram matrix `[k(xs_i, ys_j)]` evaluated numerically.
pub fn gram_values(kind: BasicKernelKind, params: &KernelParams, xs: &[f64], ys: &[f64]) -> Tensor {
    let mut data = Vec::with_capacity(xs.len() * ys.len());
    for &x in xs {
        for &y in ys {
            data.push(eval_basic(kind, params, x, y));
        }
    }
    Tensor::matrix(xs.len(), ys.len(), data).expect("gram shape")
}

/// A basic kernel instance whose parameters live in a [`ParamStore`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasicKernel {
    pub kind: BasicKernelKind,
    log_sigma_k: ParamId,
    log_l: Option<ParamId>,
    log_p: Option<ParamId>,
    c: Option<ParamId>,
    log_a: Option<ParamId>,
}

impl BasicKernel {
    pub fn register(
        store: &mut ParamStore,
        prefix: &str,
        kind: BasicKernelKind,
        params: &KernelParams,
    ) -> Self {
        let log_sigma_k = store.insert_scalar(format!("{prefix}.log_sigma_k"), params.raw_log_sigma_k);
        let mut k = Self {
            kind,
            log_sigma_k,
            log_l: None,
            log_p: None,
            c: None,
            log_a: None,
        };
        match kind {
            BasicKernelKind::SE => {
                k.log_l = Some(store.insert_scalar(format!("{prefix}.log_l"), params.raw_log_l));
            }
            BasicKernelKind::PER => {
                k.log_l = Some(store.insert_scalar(format!("{prefix}.log_l"), params.raw_log_l));
                k.log_p = Some(store.insert_scalar(format!("{prefix}.log_p"), params.raw_log_p));
            }
            BasicKernelKind::LIN => {
                k.c = Some(store.insert_scalar(format!("{prefix}.c"), params.c));
            }
            BasicKernelKind::RQ => {
                k.log_l = Some(store.insert_scalar(format!("{prefix}.log_l"), params.raw_log_l));
                k.log_a = Some(store.insert_scalar(format!("{prefix}.log_a"), params.raw_log_a));
            }
        }
        k
    }

    pub fn params(&self, store: &ParamStore) -> KernelParams {
        let get = |id: Option<ParamId>, default: f64| id.map_or(default, |id| store.scalar(id));
        KernelParams {
            raw_log_sigma_k: store.scalar(self.log_sigma_k),
            raw_log_l: get(self.log_l, 0.0),
            raw_log_p: get(self.log_p, 0.0),
            c: get(self.c, 0.0),
            raw_log_a: get(self.log_a, 0.0),
        }
    }

    /// Writes the parameters this kind uses; the rest are ignored.
    pub fn set_params(&self, store: &mut ParamStore, params: &KernelParams) {
        store.set_scalar(self.log_sigma_k, params.raw_log_sigma_k);
        let pairs = [
            (self.log_l, params.raw_log_l),
            (self.log_p, params.raw_log_p),
            (self.c, params.c),
            (self.log_a, params.raw_log_a),
        ];
        for (id, v) in pairs {
            if let Some(id) = id {
                store.set_scalar(id, v);
            }
        }
    }

    pub fn eval(&self, store: &ParamStore, xi: f64, xj: f64) -> f64 {
        eval_basic(self.kind, &self.params(store), xi, xj)
    }

    /// Differentiable Gram matrix between a column of locations `x` (n×1)
    /// and a row of locations `y` (1×m).
    pub fn gram(&self, g: &mut Graph, b: &Binding, x: Var, y: Var) -> Result<Var> {
        let (n, m) = (g.shape(x)[0], g.shape(y)[1]);
        let shape = [n, m];
        let log_s = b.var(self.log_sigma_k);
        let two_log_s = g.scale(log_s, 2.0);
        let s2 = g.exp(two_log_s);

        let base = match self.kind {
            BasicKernelKind::LIN => {
                let c = b.var(self.c.expect("LIN has c"));
                let cx = g.broadcast(c, &[n, 1])?;
                let cy = g.broadcast(c, &[1, m])?;
                let xc = g.sub(x, cx)?;
                let yc = g.sub(y, cy)?;
                g.matmul(xc, yc)?
            }
            kind => {
                let xb = g.broadcast(x, &shape)?;
                let yb = g.broadcast(y, &shape)?;
                let d = g.sub(xb, yb)?;
                let log_l = b.var(self.log_l.expect("stationary kernel has l"));
                match kind {
                    BasicKernelKind::SE => {
                        // exp(-d² · ½ e^{-2 log l})
                        let sq = g.square(d);
                        let inv = g.scale(log_l, -2.0);
                        let inv = g.exp(inv);
                        let coef = g.scale(inv, -0.5);
                        let arg = g.mul_scalar(sq, coef)?;
                        g.exp(arg)
                    }
                    BasicKernelKind::PER => {
                        // exp(-2 sin²(π d / p) e^{-2 log l})
                        let log_p = b.var(self.log_p.expect("PER has p"));
                        let inv_p = g.neg(log_p);
                        let inv_p = g.exp(inv_p);
                        let freq = g.scale(inv_p, PI);
                        let u = g.mul_scalar(d, freq)?;
                        let s = g.sin(u);
                        let s2n = g.square(s);
                        let inv = g.scale(log_l, -2.0);
                        let inv = g.exp(inv);
                        let coef = g.scale(inv, -2.0);
                        let arg = g.mul_scalar(s2n, coef)?;
                        g.exp(arg)
                    }
                    BasicKernelKind::RQ => {
                        // exp(-a · log(1 + d² · ½ e^{-log a - 2 log l}))
                        let log_a = b.var(self.log_a.expect("RQ has a"));
                        let sq = g.square(d);
                        let two_l = g.scale(log_l, 2.0);
                        let denom = g.add(log_a, two_l)?;
                        let inv = g.neg(denom);
                        let inv = g.exp(inv);
                        let coef = g.scale(inv, 0.5);
                        let u = g.mul_scalar(sq, coef)?;
                        let u1 = g.add_const(u, 1.0);
                        let lg = g.log(u1);
                        let a = g.exp(log_a);
                        let neg_a = g.neg(a);
                        let arg = g.mul_scalar(lg, neg_a)?;
                        g.exp(arg)
                    }
                    BasicKernelKind::LIN => unreachable!(),
                }
            }
        };
        g.mul_scalar(base, s2)
    }
}
