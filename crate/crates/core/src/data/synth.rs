use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::TimeSeriesMatrix;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SynthKind {
    Sine,
    Trend,
    SinePlusTrend,
    SineAbrupt,
    CoupledPair,
}

impl SynthKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Sine => "sine",
            Self::Trend => "trend",
            Self::SinePlusTrend => "sine_plus_trend",
            Self::SineAbrupt => "sine_abrupt",
            Self::CoupledPair => "coupled_pair",
        }
    }
}

impl fmt::Display for SynthKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SynthKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sine" => Ok(Self::Sine),
            "trend" => Ok(Self::Trend),
            "sine_plus_trend" => Ok(Self::SinePlusTrend),
            "sine_abrupt" => Ok(Self::SineAbrupt),
            "coupled_pair" => Ok(Self::CoupledPair),
            other => Err(Error::Config(format!("unknown synthetic series '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthParams {
    pub amplitude: f64,
    pub period: f64,
    /// Trend increment per step.
    pub slope: f64,
    /// Step at which `sine_abrupt` shifts level; defaults to `t / 2`.
    pub jump_at: Option<usize>,
    pub jump_size: f64,
    /// `coupled_pair`: variable 2 = `coupling · lag(variable 1, lag)`.
    pub coupling: f64,
    pub lag: usize,
    /// AR(1) coefficient and innovation scale of the shared driver in
    /// `coupled_pair`.
    pub ar: f64,
    pub ar_scale: f64,
    /// Extra independent AR(1) variables appended to the output.
    pub noise_variables: usize,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            amplitude: 1.0,
            period: 12.0,
            slope: 0.5,
            jump_at: None,
            jump_size: 2.0,
            coupling: 1.0,
            lag: 2,
            ar: 0.7,
            ar_scale: 0.3,
            noise_variables: 0,
        }
    }
}

/// `amplitude · sin(2πk/period)`, reducing `k` modulo the period first so an
/// integral period repeats exactly.
fn sine_at(k: usize, p: &SynthParams) -> f64 {
    let phase = (k as f64) % p.period;
    p.amplitude * (2.0 * PI * phase / p.period).sin()
}

fn ar_series(len: usize, phi: f64, scale: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let innov = Normal::new(0.0, 1.0).expect("unit normal");
    let mut out = Vec::with_capacity(len);
    let mut x = 0.0;
    for _ in 0..len {
        x = phi * x + scale * innov.sample(rng);
        out.push(x);
    }
    out
}

/// Deterministic synthetic series; Gaussian noise of std `noise` is added to
/// every generated variable except the leading variable of `coupled_pair`.
pub fn synth(kind: SynthKind, t: usize, params: &SynthParams, noise: f64, seed: u64) -> Result<TimeSeriesMatrix> {
    if t < 2 {
        return Err(Error::TooShort(format!("synthetic series needs t ≥ 2, got {t}")));
    }
    if !(params.period > 0.0) || !(noise >= 0.0) {
        return Err(Error::Config("period must be positive and noise non-negative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eps = Normal::new(0.0, 1.0).expect("unit normal");
    let noisy = |v: f64, rng: &mut ChaCha8Rng| {
        if noise > 0.0 {
            v + noise * eps.sample(rng)
        } else {
            v
        }
    };
    let mut columns: Vec<Vec<f64>> = match kind {
        SynthKind::Sine => vec![(0..t).map(|k| noisy(sine_at(k, params), &mut rng)).collect()],
        SynthKind::Trend => vec![(0..t).map(|k| noisy(params.slope * k as f64, &mut rng)).collect()],
        SynthKind::SinePlusTrend => vec![(0..t)
            .map(|k| noisy(params.slope * k as f64 + sine_at(k, params), &mut rng))
            .collect()],
        SynthKind::SineAbrupt => {
            let at = params.jump_at.unwrap_or(t / 2);
            vec![(0..t)
                .map(|k| {
                    let shift = if k >= at { params.jump_size } else { 0.0 };
                    noisy(sine_at(k, params) + shift, &mut rng)
                })
                .collect()]
        }
        SynthKind::CoupledPair => {
            let tau = params.lag;
            let driver = ar_series(t + tau, params.ar, params.ar_scale, &mut rng);
            let base: Vec<f64> = (0..t + tau).map(|k| sine_at(k, params) + driver[k]).collect();
            let lead: Vec<f64> = (0..t).map(|k| base[k + tau]).collect();
            let follow: Vec<f64> = (0..t)
                .map(|k| noisy(params.coupling * base[k], &mut rng))
                .collect();
            vec![lead, follow]
        }
    };
    for _ in 0..params.noise_variables {
        columns.push(ar_series(t, params.ar, 1.0, &mut rng));
    }
    TimeSeriesMatrix::from_columns(&columns)
}
