//! Scalar losses returning `(mean loss, gradient w.r.t. the prediction)`.

use crate::error::{shape_err, Result};
use crate::layers::sigmoid;
use crate::real::Real;
use crate::tensor::Tensor;

fn check<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<T> {
    if a.shape() != b.shape() {
        return Err(shape_err(format!("loss operands {:?} vs {:?}", a.shape(), b.shape())));
    }
    if a.is_empty() {
        return Err(shape_err("loss over an empty tensor"));
    }
    Ok(T::of(a.len() as f64))
}

pub fn mse<T: Real>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<(T, Tensor<T>)> {
    let n = check(pred, target)?;
    let mut grad = Tensor::zeros(pred.shape());
    let mut loss = T::zero();
    let two = T::of(2.0);
    for ((g, &p), &t) in grad.data_mut().iter_mut().zip(pred.data()).zip(target.data()) {
        let d = p - t;
        loss += d * d;
        *g = two * d / n;
    }
    Ok((loss / n, grad))
}

pub fn l1<T: Real>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<(T, Tensor<T>)> {
    let n = check(pred, target)?;
    let mut grad = Tensor::zeros(pred.shape());
    let mut loss = T::zero();
    for ((g, &p), &t) in grad.data_mut().iter_mut().zip(pred.data()).zip(target.data()) {
        let d = p - t;
        loss += d.abs();
        *g = if d > T::zero() {
            T::one() / n
        } else if d < T::zero() {
            -T::one() / n
        } else {
            T::zero()
        };
    }
    Ok((loss / n, grad))
}

/// Binary cross-entropy on logits against a constant label.
pub fn bce_with_logits<T: Real>(logits: &Tensor<T>, label: T) -> Result<(T, Tensor<T>)> {
    let n = check(logits, logits)?;
    let mut grad = Tensor::zeros(logits.shape());
    let mut loss = T::zero();
    for (g, &z) in grad.data_mut().iter_mut().zip(logits.data()) {
        loss += z.max(T::zero()) - z * label + (-z.abs()).exp().ln_1p();
        *g = (sigmoid(z) - label) / n;
    }
    Ok((loss / n, grad))
}
