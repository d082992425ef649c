use crate::error::{shape_err, Result};
use crate::param::{Buffer, Mode, Param};
use crate::real::Real;
use crate::tensor::Tensor;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone)]
struct Cache<T> {
    xhat: Tensor<T>,
    inv_std: Vec<T>,
    batch_stats: bool,
}

/// Per-channel batch normalization over `(N, H, W)`.
///
/// Training mode normalizes with batch statistics and updates the running
/// averages. A layer whose scale is frozen always behaves as in inference
/// mode so that fine-tuning leaves its statistics untouched.
#[derive(Debug, Clone)]
pub struct BatchNorm2d<T> {
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub running_mean: Buffer<T>,
    pub running_var: Buffer<T>,
    cache: Option<Cache<T>>,
}

impl<T: Real> BatchNorm2d<T> {
    pub fn new(tag: &str, channels: usize) -> Self {
        let shape = [1, channels, 1, 1];
        Self {
            gamma: Param::new(format!("{tag}.gamma"), tag, Tensor::filled(shape, T::one())),
            beta: Param::new(format!("{tag}.beta"), tag, Tensor::zeros(shape)),
            running_mean: Buffer {
                name: format!("{tag}.running_mean"),
                tag: tag.to_string(),
                value: Tensor::zeros(shape),
            },
            running_var: Buffer {
                name: format!("{tag}.running_var"),
                tag: tag.to_string(),
                value: Tensor::filled(shape, T::one()),
            },
            cache: None,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.value.len()
    }

    fn uses_batch_stats(&self, mode: Mode) -> bool {
        mode == Mode::Train && (self.gamma.trainable || self.beta.trainable)
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let [n, c, h, w] = x.shape();
        if c != self.channels() {
            return Err(shape_err(format!("batchnorm expects {} channels, got {c}", self.channels())));
        }
        let hw = h * w;
        let count = n * hw;
        let eps = T::of(BN_EPS);
        let batch_stats = self.uses_batch_stats(mode);
        let mut xhat = Tensor::zeros(x.shape());
        let mut out = Tensor::zeros(x.shape());
        let mut inv_std = vec![T::zero(); c];
        for ch in 0..c {
            let plane = |b: usize| &x.sample(b)[ch * hw..(ch + 1) * hw];
            let (mean, var) = if batch_stats {
                let cnt = T::of(count as f64);
                let mean = (0..n).map(|b| plane(b).iter().copied().sum::<T>()).sum::<T>() / cnt;
                let var = (0..n)
                    .map(|b| plane(b).iter().map(|&v| (v - mean) * (v - mean)).sum::<T>())
                    .sum::<T>()
                    / cnt;
                let m = T::of(BN_MOMENTUM);
                let unbiased = if count > 1 { var * cnt / T::of((count - 1) as f64) } else { var };
                let rm = &mut self.running_mean.value.data_mut()[ch];
                *rm = (T::one() - m) * *rm + m * mean;
                let rv = &mut self.running_var.value.data_mut()[ch];
                *rv = (T::one() - m) * *rv + m * unbiased;
                (mean, var)
            } else {
                (self.running_mean.value.data()[ch], self.running_var.value.data()[ch])
            };
            let is = T::one() / (var + eps).sqrt();
            inv_std[ch] = is;
            let g = self.gamma.value.data()[ch];
            let bt = self.beta.value.data()[ch];
            for b in 0..n {
                let src = &x.sample(b)[ch * hw..(ch + 1) * hw];
                let xh = &mut xhat.sample_mut(b)[ch * hw..(ch + 1) * hw];
                for (d, &v) in xh.iter_mut().zip(src) {
                    *d = (v - mean) * is;
                }
                let dst = &mut out.sample_mut(b)[ch * hw..(ch + 1) * hw];
                for (d, &v) in dst.iter_mut().zip(xh.iter()) {
                    *d = g * v + bt;
                }
            }
        }
        self.cache = Some(Cache { xhat, inv_std, batch_stats });
        Ok(out)
    }

    pub fn backward(&mut self, grad: &Tensor<T>, need_input_grad: bool) -> Result<Option<Tensor<T>>> {
        let cache = self.cache.as_ref().ok_or_else(|| shape_err("batchnorm backward before forward"))?;
        if grad.shape() != cache.xhat.shape() {
            return Err(shape_err(format!("batchnorm grad shape {:?}", grad.shape())));
        }
        let [n, c, h, w] = grad.shape();
        let hw = h * w;
        let cnt = T::of((n * hw) as f64);
        let mut dx = need_input_grad.then(|| Tensor::zeros(grad.shape()));
        for ch in 0..c {
            let mut sum_dy = T::zero();
            let mut sum_dy_xhat = T::zero();
            for b in 0..n {
                let gy = &grad.sample(b)[ch * hw..(ch + 1) * hw];
                let xh = &cache.xhat.sample(b)[ch * hw..(ch + 1) * hw];
                for (&g, &v) in gy.iter().zip(xh) {
                    sum_dy += g;
                    sum_dy_xhat += g * v;
                }
            }
            if self.gamma.trainable {
                self.gamma.grad.data_mut()[ch] += sum_dy_xhat;
            }
            if self.beta.trainable {
                self.beta.grad.data_mut()[ch] += sum_dy;
            }
            let Some(dx) = dx.as_mut() else { continue };
            let scale = self.gamma.value.data()[ch] * cache.inv_std[ch];
            for b in 0..n {
                let gy = &grad.sample(b)[ch * hw..(ch + 1) * hw];
                let xh = &cache.xhat.sample(b)[ch * hw..(ch + 1) * hw];
                let dst = &mut dx.sample_mut(b)[ch * hw..(ch + 1) * hw];
                if cache.batch_stats {
                    for ((d, &g), &v) in dst.iter_mut().zip(gy).zip(xh) {
                        *d = scale * (g - sum_dy / cnt - v * sum_dy_xhat / cnt);
                    }
                } else {
                    for (d, &g) in dst.iter_mut().zip(gy) {
                        *d = scale * g;
                    }
                }
            }
        }
        Ok(dx)
    }
}
