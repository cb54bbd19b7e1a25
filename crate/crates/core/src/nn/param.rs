use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::nn::Tensor;

/// Handle to a parameter inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A learnable tensor together with its accumulated gradient.
#[derive(Clone, Debug)]
pub struct Parameter {
    name: String,
    value: Tensor,
    grad: Tensor,
    grad_populated: bool,
}

impl Parameter {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn value(&self) -> &Tensor {
        &self.value
    }

    pub fn value_mut(&mut self) -> &mut Tensor {
        &mut self.value
    }

    pub fn grad(&self) -> &Tensor {
        &self.grad
    }

    /// Whether a backward pass (or [`ParamStore::set_grad`]) has written to the
    /// gradient since the last zeroing.
    pub fn grad_populated(&self) -> bool {
        self.grad_populated
    }
}

/// Owns every parameter of one model. Names are unique.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    params: Vec<Parameter>,
    by_name: HashMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(Error::DuplicateParameter(name));
        }
        let id = ParamId(self.params.len());
        let grad = Tensor::zeros(value.shape());
        self.by_name.insert(name.clone(), id);
        self.params.push(Parameter { name, value, grad, grad_populated: false });
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
            p.grad_populated = false;
        }
    }

    /// Overwrites a gradient directly; used by tests and external gradient sources.
    pub fn set_grad(&mut self, id: ParamId, grad: Tensor) -> Result<()> {
        let p = &mut self.params[id.0];
        if grad.shape() != p.value.shape() {
            return Err(Error::shape(
                "set_grad",
                format!("`{}` is {:?}, gradient is {:?}", p.name, p.value.shape(), grad.shape()),
            ));
        }
        p.grad = grad;
        p.grad_populated = true;
        Ok(())
    }

    pub(crate) fn accumulate_grad(&mut self, id: ParamId, grad: &[f64]) {
        let p = &mut self.params[id.0];
        debug_assert_eq!(p.grad.len(), grad.len());
        for (g, d) in p.grad.data_mut().iter_mut().zip(grad) {
            *g += d;
        }
        p.grad_populated = true;
    }

    /// Total count of scalar parameters.
    pub fn num_values(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }
}
