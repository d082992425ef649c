use serde::{Deserialize, Serialize};

use crate::param::Param;
use crate::real::Real;

pub const ADAM_EPS: f64 = 1e-8;

/// Adam hyperparameters and step counter. Moments live in each [`Param`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub step: u64,
}

impl Adam {
    pub fn new(learning_rate: f64, beta1: f64, beta2: f64) -> Self {
        Self { learning_rate, beta1, beta2, step: 0 }
    }

    /// Applies one update to every trainable parameter; frozen parameters
    /// are not touched.
    pub fn step<'a, T: Real>(&mut self, params: impl IntoIterator<Item = &'a mut Param<T>>) {
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (T::of(self.beta1), T::of(self.beta2));
        let c1 = T::of(1.0 - self.beta1.powi(t));
        let c2 = T::of(1.0 - self.beta2.powi(t));
        let lr = T::of(self.learning_rate);
        let eps = T::of(ADAM_EPS);
        for p in params {
            if !p.trainable {
                continue;
            }
            let g = p.grad.data();
            let m = p.adam_m.data_mut();
            let v = p.adam_v.data_mut();
            let w = p.value.data_mut();
            for i in 0..w.len() {
                m[i] = b1 * m[i] + (T::one() - b1) * g[i];
                v[i] = b2 * v[i] + (T::one() - b2) * g[i] * g[i];
                w[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
            }
        }
    }

    /// Clears the step count and the moments of `params`.
    pub fn reset<'a, T: Real>(&mut self, params: impl IntoIterator<Item = &'a mut Param<T>>) {
        self.step = 0;
        for p in params {
            p.adam_m.data_mut().fill(T::zero());
            p.adam_v.data_mut().fill(T::zero());
        }
    }
}
