use crate::real::Real;
use crate::tensor::Tensor;

/// Forward-pass mode. Affects batch normalization only.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// A learnable tensor with its gradient slot and Adam moments.
#[derive(Debug, Clone)]
pub struct Param<T> {
    pub name: String,
    /// Layer tag used to build freeze masks, e.g. `block3` or `gen.enc2`.
    pub tag: String,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
    pub adam_m: Tensor<T>,
    pub adam_v: Tensor<T>,
    pub trainable: bool,
}

impl<T: Real> Param<T> {
    pub fn new(name: impl Into<String>, tag: impl Into<String>, value: Tensor<T>) -> Self {
        let shape = value.shape();
        Self {
            name: name.into(),
            tag: tag.into(),
            grad: Tensor::zeros(shape),
            adam_m: Tensor::zeros(shape),
            adam_v: Tensor::zeros(shape),
            value,
            trainable: true,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.data_mut().iter_mut().for_each(|g| *g = T::zero());
    }

    pub fn numel(&self) -> usize {
        self.value.len()
    }
}

/// Non-learnable state saved with a model (batch-norm running statistics).
#[derive(Debug, Clone)]
pub struct Buffer<T> {
    pub name: String,
    pub tag: String,
    pub value: Tensor<T>,
}
