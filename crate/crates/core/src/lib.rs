//! Deep autoregressive Gaussian-process forecasting for multivariate time
//! series: subsequences are embedded into Gaussian locations by a
//! patch-attention network, a kernel built from SE/PER/LIN/RQ by `+` and `×`
//! (found by differentiable or greedy search) covers all variables, and
//! learnable cross-variable weights scale each variable pair.

pub mod data;
pub mod diff;
pub mod error;
pub mod forecaster;
pub mod gp;
pub mod kernel_search;
pub mod kernels;
pub mod location;
pub mod multivariate;

pub use error::{Error, Result};
