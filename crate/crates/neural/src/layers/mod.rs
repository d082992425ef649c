//! Layers with exact forward and backward passes.

mod activation;
mod conv;
mod norm;

pub use activation::{sigmoid, Activation, ActivationKind, LEAKY_SLOPE};
pub use conv::{Conv2d, ConvTranspose2d, Window};
pub use norm::{BatchNorm2d, BN_EPS, BN_MOMENTUM};

use crate::error::Result;
use crate::param::{Buffer, Mode, Param};
use crate::real::Real;
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub enum Layer<T> {
    Conv(Conv2d<T>),
    ConvTranspose(ConvTranspose2d<T>),
    BatchNorm(BatchNorm2d<T>),
    Act(Activation<T>),
}

impl<T: Real> Layer<T> {
    pub fn act(kind: ActivationKind) -> Self {
        Layer::Act(Activation::new(kind))
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        match self {
            Layer::Conv(l) => l.forward(x),
            Layer::ConvTranspose(l) => l.forward(x),
            Layer::BatchNorm(l) => l.forward(x, mode),
            Layer::Act(l) => Ok(l.forward(x)),
        }
    }

    /// Accumulates parameter gradients of trainable parameters and returns
    /// the input gradient when requested.
    pub fn backward(&mut self, grad: &Tensor<T>, need_input_grad: bool) -> Result<Option<Tensor<T>>> {
        match self {
            Layer::Conv(l) => l.backward(grad, need_input_grad),
            Layer::ConvTranspose(l) => l.backward(grad, need_input_grad),
            Layer::BatchNorm(l) => l.backward(grad, need_input_grad),
            Layer::Act(l) if need_input_grad => l.backward(grad).map(Some),
            Layer::Act(_) => Ok(None),
        }
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        match self {
            Layer::Conv(l) => vec![&l.weight, &l.bias],
            Layer::ConvTranspose(l) => vec![&l.weight, &l.bias],
            Layer::BatchNorm(l) => vec![&l.gamma, &l.beta],
            Layer::Act(_) => vec![],
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        match self {
            Layer::Conv(l) => vec![&mut l.weight, &mut l.bias],
            Layer::ConvTranspose(l) => vec![&mut l.weight, &mut l.bias],
            Layer::BatchNorm(l) => vec![&mut l.gamma, &mut l.beta],
            Layer::Act(_) => vec![],
        }
    }

    pub fn buffers(&self) -> Vec<&Buffer<T>> {
        match self {
            Layer::BatchNorm(l) => vec![&l.running_mean, &l.running_var],
            _ => vec![],
        }
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut Buffer<T>> {
        match self {
            Layer::BatchNorm(l) => vec![&mut l.running_mean, &mut l.running_var],
            _ => vec![],
        }
    }

    pub fn has_trainable(&self) -> bool {
        self.params().iter().any(|p| p.trainable)
    }
}

/// A chain of layers applied in order.
#[derive(Debug, Clone, Default)]
pub struct Sequential<T> {
    pub layers: Vec<Layer<T>>,
}

impl<T: Real> Sequential<T> {
    pub fn new(layers: Vec<Layer<T>>) -> Self {
        Self { layers }
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let mut cur = x.clone();
        for l in &mut self.layers {
            cur = l.forward(&cur, mode)?;
        }
        Ok(cur)
    }

    /// Backpropagates `grad`. Layers in front of the first trainable one are
    /// skipped unless the caller asks for the input gradient.
    pub fn backward(&mut self, grad: &Tensor<T>, need_input_grad: bool) -> Result<Option<Tensor<T>>> {
        let stop = if need_input_grad {
            0
        } else {
            match self.layers.iter().position(|l| l.has_trainable()) {
                Some(i) => i,
                None => return Ok(None),
            }
        };
        let mut cur = grad.clone();
        for i in (stop..self.layers.len()).rev() {
            let need = need_input_grad || i > stop;
            match self.layers[i].backward(&cur, need)? {
                Some(g) => cur = g,
                None => return Ok(None),
            }
        }
        Ok(Some(cur))
    }

    pub fn has_trainable(&self) -> bool {
        self.layers.iter().any(|l| l.has_trainable())
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    pub fn buffers(&self) -> Vec<&Buffer<T>> {
        self.layers.iter().flat_map(|l| l.buffers()).collect()
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut Buffer<T>> {
        self.layers.iter_mut().flat_map(|l| l.buffers_mut()).collect()
    }
}
