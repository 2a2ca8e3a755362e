use rand::Rng as _;

use crate::util::Rng;
use crate::{Error, Result};

/// A trainable array with a gradient buffer of identical shape.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
    pub grad: Vec<f64>,
}

impl ParamTensor {
    pub fn zeros(name: impl Into<String>, shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            name: name.into(),
            shape: shape.to_vec(),
            values: vec![0.0; n],
            grad: vec![0.0; n],
        }
    }

    /// Uniform initialization in `[-scale, scale]`.
    pub fn uniform(name: impl Into<String>, shape: &[usize], scale: f64, rng: &mut Rng) -> Self {
        let mut t = Self::zeros(name, shape);
        for v in &mut t.values {
            *v = rng.random_range(-scale..=scale);
        }
        t
    }

    pub fn from_values(name: impl Into<String>, shape: &[usize], values: Vec<f64>) -> Result<Self> {
        let name = name.into();
        let n: usize = shape.iter().product();
        if values.len() != n {
            return Err(Error::Shape(format!(
                "{name}: {} values for shape {shape:?}",
                values.len()
            )));
        }
        Ok(Self {
            name,
            shape: shape.to_vec(),
            grad: vec![0.0; n],
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Row `i` of a 2-D tensor.
    pub fn row(&self, i: usize) -> &[f64] {
        let cols = self.shape[1];
        &self.values[i * cols..(i + 1) * cols]
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }

    pub fn check_finite(&self) -> Result<()> {
        if self.values.iter().chain(&self.grad).all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite(format!("tensor {}", self.name)))
        }
    }
}

/// Anything that owns trainable tensors.
pub trait Parameters {
    fn params(&self) -> Vec<&ParamTensor>;
    fn params_mut(&mut self) -> Vec<&mut ParamTensor>;

    fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Scales every gradient, e.g. to turn a summed minibatch gradient into a mean.
    fn scale_grad(&mut self, factor: f64) {
        for p in self.params_mut() {
            p.grad.iter_mut().for_each(|g| *g *= factor);
        }
    }
}
