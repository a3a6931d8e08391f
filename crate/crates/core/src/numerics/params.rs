use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::graph::{Gradients, Graph, Var};
use super::real::Real;
use super::tensor::Tensor;
use crate::error::{contract, Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ParamEntry<T = f32> {
    pub name: String,
    pub tensor: Tensor<T>,
    pub frozen: bool,
}

/// Named, ordered collection of network tensors with per-tensor freeze flags.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct NetworkParams<T = f32> {
    entries: Vec<ParamEntry<T>>,
}

/// Gradient tensors keyed by parameter name.
pub type Grads<T = f32> = BTreeMap<String, Tensor<T>>;

impl<T: Real> NetworkParams<T> {
    pub fn new() -> Self {
        NetworkParams { entries: Vec::new() }
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<T>) -> Result<()> {
        let name = name.into();
        if self.get(&name).is_some() {
            return Err(Error::Config(format!("duplicate parameter name `{name}`")));
        }
        self.entries.push(ParamEntry { name, tensor, frozen: false });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.entry(name).map(|e| &e.tensor)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.entries.iter_mut().find(|e| e.name == name).map(|e| &mut e.tensor)
    }

    pub fn entry(&self, name: &str) -> Option<&ParamEntry<T>> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn is_frozen(&self, name: &str) -> bool {
        self.entry(name).is_some_and(|e| e.frozen)
    }

    pub fn set_frozen(&mut self, name: &str, frozen: bool) -> Result<()> {
        let e = self
            .entries
            .iter_mut()
            .find(|e| e.name == name)
            .ok_or_else(|| contract(format!("no parameter `{name}`")))?;
        e.frozen = frozen;
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = &ParamEntry<T>> {
        self.entries.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut ParamEntry<T>> {
        self.entries.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.name.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_values(&self) -> usize {
        self.entries.iter().map(|e| e.tensor.numel()).sum()
    }

    pub fn cast<U: Real>(&self) -> NetworkParams<U> {
        NetworkParams {
            entries: self
                .entries
                .iter()
                .map(|e| ParamEntry { name: e.name.clone(), tensor: e.tensor.cast(), frozen: e.frozen })
                .collect(),
        }
    }

    /// Same names, shapes and freeze flags.
    pub fn same_layout(&self, other: &NetworkParams<T>) -> bool {
        self.entries.len() == other.entries.len()
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|(a, b)| a.name == b.name && a.tensor.shape() == b.tensor.shape())
    }

    /// Places every tensor on `graph`; frozen tensors become constants.
    pub fn bind(&self, graph: &mut Graph<T>) -> Bound {
        let vars = self
            .entries
            .iter()
            .map(|e| {
                let var = if e.frozen { graph.input(e.tensor.clone()) } else { graph.param(e.tensor.clone()) };
                (e.name.clone(), var, !e.frozen)
            })
            .collect();
        Bound { vars }
    }

    /// Places every tensor on `graph` as a constant, for inference.
    pub fn bind_constant(&self, graph: &mut Graph<T>) -> Bound {
        let vars = self.entries.iter().map(|e| (e.name.clone(), graph.input(e.tensor.clone()), false)).collect();
        Bound { vars }
    }

    /// Name of the first tensor holding a non-finite value.
    pub fn first_non_finite(&self) -> Option<&str> {
        self.entries.iter().find(|e| !e.tensor.is_finite()).map(|e| e.name.as_str())
    }
}

/// Resolves parameter names to graph nodes.
pub trait ParamLookup {
    fn var(&self, name: &str) -> Result<Var>;
}

/// Parameters placed on a [`Graph`].
#[derive(Clone, Debug)]
pub struct Bound {
    vars: Vec<(String, Var, bool)>,
}

impl Bound {
    /// Moves the gradients of trainable tensors out of `grads`.
    ///
    /// A trainable tensor the loss does not depend on gets no entry.
    pub fn collect<T: Real>(&self, grads: &mut Gradients<T>) -> Grads<T> {
        self.vars
            .iter()
            .filter(|(_, _, trainable)| *trainable)
            .filter_map(|(name, var, _)| grads.take(*var).map(|g| (name.clone(), g)))
            .collect()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.vars.iter().any(|(n, _, _)| n == name)
    }
}

impl ParamLookup for Bound {
    fn var(&self, name: &str) -> Result<Var> {
        self.vars
            .iter()
            .find(|(n, _, _)| n == name)
            .map(|(_, v, _)| *v)
            .ok_or_else(|| contract(format!("missing parameter `{name}`")))
    }
}

/// Looks a name up in `first`, then in `second`.
pub struct Chain<'a>(pub &'a Bound, pub &'a Bound);

impl ParamLookup for Chain<'_> {
    fn var(&self, name: &str) -> Result<Var> {
        if self.0.contains(name) {
            self.0.var(name)
        } else {
            self.1.var(name)
        }
    }
}

/// Global L2 norm of a gradient set.
pub fn grad_norm<T: Real>(grads: &Grads<T>) -> f64 {
    libm::sqrt(grads.values().map(|g| g.norm() * g.norm()).sum())
}

/// Rescales `grads` in place so that their global norm is at most `max_norm`.
pub fn clip_grad_norm<T: Real>(grads: &mut Grads<T>, max_norm: f64) -> f64 {
    let norm = grad_norm(grads);
    if norm > max_norm && norm > 0.0 {
        let s = T::of(max_norm / norm);
        for g in grads.values_mut() {
            g.data_mut().iter_mut().for_each(|v| *v *= s);
        }
    }
    norm
}

/// Adds `other` into `acc` name by name.
pub fn accumulate_grads<T: Real>(acc: &mut Grads<T>, other: Grads<T>) {
    for (name, g) in other {
        match acc.get_mut(&name) {
            Some(e) => e.data_mut().iter_mut().zip(g.data()).for_each(|(a, &b)| *a += b),
            None => {
                acc.insert(name.to_string(), g);
            }
        }
    }
}
