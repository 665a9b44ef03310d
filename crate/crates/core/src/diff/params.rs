use serde::{Deserialize, Serialize};

use super::graph::{Gradients, Graph, Var};
use super::tensor::Tensor;

/// Index of a tensor inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(pub usize);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Entry {
    name: String,
    value: Tensor,
    frozen: bool,
}

/// Owns every learnable tensor of a model. Components keep [`ParamId`]s and
/// read values through the store, so a whole model is optimised, checked by
/// finite differences and serialised through one flat structure.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    entries: Vec<Entry>,
}

/// Graph handles for every parameter of a store, created by [`ParamStore::bind`].
#[derive(Clone, Debug)]
pub struct Binding {
    vars: Vec<Var>,
}

impl Binding {
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        self.entries.push(Entry {
            name: name.into(),
            value,
            frozen: false,
        });
        ParamId(self.entries.len() - 1)
    }

    pub fn insert_scalar(&mut self, name: impl Into<String>, value: f64) -> ParamId {
        self.insert(name, Tensor::scalar(value))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].value
    }

    pub fn scalar(&self, id: ParamId) -> f64 {
        self.entries[id.0].value.item()
    }

    pub fn set(&mut self, id: ParamId, value: Tensor) {
        self.entries[id.0].value = value;
    }

    pub fn set_scalar(&mut self, id: ParamId, value: f64) {
        self.entries[id.0].value = Tensor::scalar(value);
    }

    pub fn freeze(&mut self, id: ParamId) {
        self.entries[id.0].frozen = true;
    }

    pub fn is_frozen(&self, id: ParamId) -> bool {
        self.entries[id.0].frozen
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.entries.iter().position(|e| e.name == name).map(ParamId)
    }

    /// Registers every parameter as a graph leaf. Frozen parameters become
    /// constants and receive no gradient.
    pub fn bind(&self, g: &mut Graph) -> Binding {
        let vars = self
            .entries
            .iter()
            .map(|e| {
                if e.frozen {
                    g.constant(e.value.clone())
                } else {
                    g.param(e.value.clone())
                }
            })
            .collect();
        Binding { vars }
    }

    /// Per-parameter gradients in store order (zeros where a parameter did
    /// not reach the root or is frozen).
    pub fn collect_grads(&self, binding: &Binding, grads: &Gradients) -> Vec<Tensor> {
        self.entries
            .iter()
            .zip(&binding.vars)
            .map(|(e, &v)| {
                if e.frozen {
                    Tensor::zeros(e.value.shape())
                } else {
                    grads.get_or_zeros(v, e.value.shape())
                }
            })
            .collect()
    }

    pub fn all_finite(&self) -> bool {
        self.entries.iter().all(|e| e.value.is_finite())
    }

    /// Total number of scalar values.
    pub fn numel(&self) -> usize {
        self.entries.iter().map(|e| e.value.len()).sum()
    }
}
