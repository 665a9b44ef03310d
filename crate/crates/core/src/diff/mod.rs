//! Minimal reverse-mode automatic differentiation over dense `f64` tensors.

mod adam;
pub mod check;
mod graph;
pub mod linalg;
mod params;
mod tensor;

pub use adam::{adam_step, Adam, AdamConfig, AdamState};
pub use graph::{sigmoid, softmax_values, softplus, Axis, Gradients, Graph, Var};
pub use params::{Binding, ParamId, ParamStore};
pub use tensor::Tensor;
