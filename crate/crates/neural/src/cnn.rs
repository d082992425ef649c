//! Seven-block convolutional refiner.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::init;
use crate::layers::{ActivationKind, BatchNorm2d, Conv2d, Layer, Sequential, Window};
use crate::network::Network;
use crate::optim::Adam;
use crate::param::{Buffer, Mode, Param};
use crate::real::Real;
use crate::tensor::Tensor;
use chanest_core::rng::{self, purpose};

pub const BNORM_TAG: &str = "bnorm0";
const TANH_GAIN: f64 = 5.0 / 3.0;

pub fn block_tag(i: usize) -> String {
    format!("block{i}")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CnnSpec {
    /// Square kernel size per block; padding is `k / 2`.
    pub kernels: Vec<usize>,
    /// Output channels per block. The last must be 1.
    pub widths: Vec<usize>,
}

impl Default for CnnSpec {
    fn default() -> Self {
        Self {
            kernels: vec![9, 5, 5, 5, 5, 5, 5],
            widths: vec![64, 64, 64, 32, 16, 8, 1],
        }
    }
}

impl CnnSpec {
    pub fn validate(&self) -> Result<()> {
        if self.kernels.len() != self.widths.len() || self.widths.is_empty() {
            return Err(Error::InvalidArgument("kernel and width lists must be nonempty and equal length".into()));
        }
        if self.kernels.iter().any(|k| k % 2 == 0) {
            return Err(Error::InvalidArgument("kernels must be odd to preserve shape".into()));
        }
        if self.widths.contains(&0) || *self.widths.last().unwrap() != 1 {
            return Err(Error::InvalidArgument("widths must be positive and end in 1".into()));
        }
        Ok(())
    }

    pub fn blocks(&self) -> usize {
        self.widths.len()
    }

    fn in_channels(&self, block: usize) -> usize {
        if block == 0 {
            1
        } else {
            self.widths[block - 1]
        }
    }

    /// Weights plus biases of conv block `i`.
    pub fn block_param_count(&self, i: usize) -> usize {
        let k = self.kernels[i];
        self.in_channels(i) * self.widths[i] * k * k + self.widths[i]
    }
}

#[derive(Debug, Clone)]
pub struct Cnn<T> {
    pub spec: CnnSpec,
    pub net: Sequential<T>,
    pub optimizer: Adam,
}

impl<T: Real> Cnn<T> {
    /// Builds the network with Xavier-uniform conv weights and zero biases.
    pub fn new(spec: CnnSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut layers = vec![Layer::BatchNorm(BatchNorm2d::new(BNORM_TAG, 1))];
        let mut rng = rng::stream(seed, purpose::INIT, 0);
        for i in 0..spec.blocks() {
            let tag = block_tag(i);
            let mut conv = Conv2d::new(&tag, spec.in_channels(i), spec.widths[i], Window::same(spec.kernels[i]));
            init::xavier_uniform(&mut conv.weight, TANH_GAIN, false, &mut rng);
            layers.push(Layer::Conv(conv));
            if i + 1 < spec.blocks() {
                layers.push(Layer::act(ActivationKind::Tanh));
            }
        }
        Ok(Self {
            spec,
            net: Sequential::new(layers),
            optimizer: Adam::new(1e-3, 0.9, 0.999),
        })
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        if x.channels() != 1 {
            return Err(Error::InvalidArgument(format!("CNN input must have 1 channel, got {}", x.channels())));
        }
        self.net.forward(x, mode)
    }

    pub fn backward(&mut self, grad: &Tensor<T>) -> Result<()> {
        self.net.backward(grad, false).map(|_| ())
    }

    /// Input gradient, for finite-difference checks.
    pub fn backward_input(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        self.net
            .backward(grad, true)?
            .ok_or_else(|| Error::Shape("no input gradient produced".into()))
    }

    pub fn adam_step(&mut self) {
        self.optimizer.step(self.net.params_mut());
    }

    pub fn reset_optimizer(&mut self) {
        self.optimizer.reset(self.net.params_mut());
    }
}

impl<T: Real> Network<T> for Cnn<T> {
    fn params(&self) -> Vec<&Param<T>> {
        self.net.params()
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        self.net.params_mut()
    }

    fn buffers(&self) -> Vec<&Buffer<T>> {
        self.net.buffers()
    }

    fn buffers_mut(&mut self) -> Vec<&mut Buffer<T>> {
        self.net.buffers_mut()
    }
}
