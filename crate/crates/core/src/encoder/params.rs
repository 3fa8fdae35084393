//! Named parameter tensors with gradient buffers.

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Array2<f64>,
    pub grad: Array2<f64>,
    pub trainable: bool,
}

/// Ordered collection of parameters. Order is fixed at construction and is
/// the serialization order in checkpoints.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParameterSet {
    params: Vec<Param>,
    index: BTreeMap<String, usize>,
}

/// Gradient buffers aligned with a [`ParameterSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub tensors: Vec<Array2<f64>>,
}

impl Gradients {
    pub fn zeros_like(params: &ParameterSet) -> Self {
        Self {
            tensors: params
                .iter()
                .map(|p| Array2::zeros(p.value.raw_dim()))
                .collect(),
        }
    }

    pub fn fill_zero(&mut self) {
        for t in &mut self.tensors {
            t.fill(0.0);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for t in &mut self.tensors {
            t.mapv_inplace(|v| v * factor);
        }
    }
}

impl ParameterSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a tensor; returns its index. Panics on a duplicate name, which is
    /// a programming error in model construction.
    pub fn push(&mut self, name: impl Into<String>, value: Array2<f64>) -> usize {
        let name = name.into();
        assert!(
            !self.index.contains_key(&name),
            "duplicate parameter `{name}`"
        );
        let id = self.params.len();
        self.index.insert(name.clone(), id);
        let grad = Array2::zeros(value.raw_dim());
        self.params.push(Param {
            name,
            value,
            grad,
            trainable: true,
        });
        id
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.id(name).map(|i| &self.params[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Param> {
        self.id(name).map(move |i| &mut self.params[i])
    }

    pub fn value(&self, id: usize) -> &Array2<f64> {
        &self.params[id].value
    }

    pub fn param(&self, id: usize) -> &Param {
        &self.params[id]
    }

    pub fn param_mut(&mut self, id: usize) -> &mut Param {
        &mut self.params[id]
    }

    pub fn is_trainable(&self, id: usize) -> bool {
        self.params[id].trainable
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
        }
    }

    /// Adds `grads` into the per-tensor gradient buffers of trainable tensors.
    pub fn accumulate(&mut self, grads: &Gradients) {
        for (p, g) in self.params.iter_mut().zip(&grads.tensors) {
            if p.trainable {
                p.grad += g;
            }
        }
    }

    /// Copies the value of `name` from `other`, checking shapes.
    pub fn copy_from(&mut self, name: &str, other: &ParameterSet) -> Result<()> {
        let src = other
            .get(name)
            .ok_or_else(|| Error::MissingTensor(name.to_string()))?;
        let dst = self
            .get_mut(name)
            .ok_or_else(|| Error::MissingTensor(name.to_string()))?;
        if src.value.shape() != dst.value.shape() {
            return Err(Error::ShapeMismatch {
                name: name.to_string(),
                expected: dst.value.shape().to_vec(),
                found: src.value.shape().to_vec(),
            });
        }
        dst.value.assign(&src.value);
        Ok(())
    }

    /// SHA-256 over names, shapes and little-endian values, in order.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        for p in &self.params {
            h.update(p.name.as_bytes());
            for &s in p.value.shape() {
                h.update((s as u64).to_le_bytes());
            }
            for v in p.value.iter() {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

/// Normal(0, std) matrix.
pub fn normal_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, std: f64) -> Array2<f64> {
    let dist = Normal::new(0.0, std).expect("positive std");
    Array2::from_shape_simple_fn((rows, cols), || dist.sample(rng))
}
