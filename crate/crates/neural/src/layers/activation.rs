use crate::error::{shape_err, Result};
use crate::real::Real;
use crate::tensor::Tensor;

pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActivationKind {
    Tanh,
    LeakyRelu,
    Sigmoid,
}

/// Elementwise activation. Caches the output (tanh, sigmoid) or input
/// (leaky ReLU) for the backward pass.
#[derive(Debug, Clone)]
pub struct Activation<T> {
    pub kind: ActivationKind,
    cache: Option<Tensor<T>>,
}

pub fn sigmoid<T: Real>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

impl<T: Real> Activation<T> {
    pub fn new(kind: ActivationKind) -> Self {
        Self { kind, cache: None }
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Tensor<T> {
        let slope = T::of(LEAKY_SLOPE);
        match self.kind {
            ActivationKind::Tanh => {
                let y = x.map(|v| v.tanh());
                self.cache = Some(y.clone());
                y
            }
            ActivationKind::Sigmoid => {
                let y = x.map(sigmoid);
                self.cache = Some(y.clone());
                y
            }
            ActivationKind::LeakyRelu => {
                self.cache = Some(x.clone());
                x.map(|v| if v > T::zero() { v } else { slope * v })
            }
        }
    }

    pub fn backward(&self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let c = self.cache.as_ref().ok_or_else(|| shape_err("activation backward before forward"))?;
        if c.shape() != grad.shape() {
            return Err(shape_err(format!("activation grad shape {:?}", grad.shape())));
        }
        let slope = T::of(LEAKY_SLOPE);
        let mut out = grad.clone();
        for (g, &v) in out.data_mut().iter_mut().zip(c.data()) {
            *g *= match self.kind {
                ActivationKind::Tanh => T::one() - v * v,
                ActivationKind::Sigmoid => v * (T::one() - v),
                ActivationKind::LeakyRelu if v > T::zero() => T::one(),
                ActivationKind::LeakyRelu => slope,
            };
        }
        Ok(out)
    }
}
