use rand::Rng;

use super::real::Real;
use super::tensor::Tensor;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

/// Named trainable tensors in registration order.
#[derive(Debug, Clone, Default)]
pub struct ParamStore<T> {
    names: Vec<String>,
    values: Vec<Tensor<T>>,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> ParamId {
        self.names.push(name.into());
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    /// Registers a tensor drawn from U[-1/sqrt(fan_in), 1/sqrt(fan_in)].
    pub fn add_uniform(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        fan_in: usize,
        rng: &mut impl Rng,
    ) -> ParamId {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| T::of(rng.random_range(-bound..=bound))).collect();
        self.add(name, Tensor::new(shape.to_vec(), data).expect("shape matches"))
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    /// Replaces a value, keeping its shape.
    pub fn set(&mut self, id: ParamId, value: Tensor<T>) -> Result<()> {
        let cur = &self.values[id.0];
        if cur.shape() != value.shape() {
            return Err(Error::Shape {
                op: "param set",
                lhs: cur.shape().to_vec(),
                rhs: value.shape().to_vec(),
            });
        }
        self.values[id.0] = value;
        Ok(())
    }
}
