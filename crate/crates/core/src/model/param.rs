//! Named parameter tensors and seeded initialization.

use ndarray::{ArrayD, IxDyn};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// A learnable tensor with its gradient accumulator.
#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub value: ArrayD<f64>,
    pub grad: ArrayD<f64>,
}

impl Param {
    pub fn new(name: impl Into<String>, value: ArrayD<f64>) -> Self {
        let grad = ArrayD::zeros(value.raw_dim());
        Self {
            name: name.into(),
            value,
            grad,
        }
    }

    pub fn zeros(name: impl Into<String>, shape: &[usize]) -> Self {
        Self::new(name, ArrayD::zeros(IxDyn(shape)))
    }

    pub fn ones(name: impl Into<String>, shape: &[usize]) -> Self {
        Self::new(name, ArrayD::from_elem(IxDyn(shape), 1.0))
    }

    /// Normal(0, sqrt(2/fan_in)); the usual choice ahead of ReLU.
    pub fn he_normal(
        name: impl Into<String>,
        shape: &[usize],
        fan_in: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        Self::gaussian(name, shape, (2.0 / fan_in as f64).sqrt(), rng)
    }

    /// Normal(0, sqrt(1/fan_in)); used for output heads.
    pub fn lecun_normal(
        name: impl Into<String>,
        shape: &[usize],
        fan_in: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        Self::gaussian(name, shape, (1.0 / fan_in as f64).sqrt(), rng)
    }

    fn gaussian(
        name: impl Into<String>,
        shape: &[usize],
        std: f64,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let dist = Normal::new(0.0, std).expect("std must be finite");
        let value = ArrayD::from_shape_simple_fn(IxDyn(shape), || dist.sample(rng));
        Self::new(name, value)
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

/// Visitor over every parameter of a module, in a fixed construction order.
pub trait Visit {
    fn visit(&mut self, f: &mut dyn FnMut(&mut Param));
}
