//! Applying a trained model to complex channel estimates.

use num_complex::Complex64;

use crate::cnn::Cnn;
use crate::error::{shape_err, Result};
use crate::gan::Gan;
use crate::param::Mode;
use crate::real::Real;
use crate::tensor::Tensor;
use chanest_core::estimators::{minmax_denormalize, minmax_normalize, EstimateGrid, EstimateKind};
use chanest_core::CMatrix;

/// Inference on `[n, 1, rows, cols]` planes.
pub trait Refiner<T: Real> {
    fn refine_planes(&mut self, x: &Tensor<T>) -> Result<Tensor<T>>;
}

impl<T: Real> Refiner<T> for Cnn<T> {
    fn refine_planes(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.forward(x, Mode::Eval)
    }
}

impl<T: Real> Refiner<T> for Gan<T> {
    fn refine_planes(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (rows, cols) = x.spatial();
        let padded = self.pad(x)?;
        let out = self.generator.forward(&padded, Mode::Eval)?;
        Ok(self.crop(&out, rows, cols))
    }
}

/// Real and imaginary parts as two row-major planes.
pub fn split_planes(g: &CMatrix) -> (Vec<f64>, Vec<f64>) {
    (g.iter().map(|v| v.re).collect(), g.iter().map(|v| v.im).collect())
}

/// `[2, 1, K, M]` tensor holding the real then the imaginary plane.
pub fn grid_to_planes<T: Real>(g: &CMatrix) -> Tensor<T> {
    let (k, m) = g.dim();
    let (re, im) = split_planes(g);
    let data = re.into_iter().chain(im).map(T::of).collect();
    Tensor::from_vec([2, 1, k, m], data).expect("two planes")
}

pub fn planes_to_grid<T: Real>(t: &Tensor<T>) -> Result<CMatrix> {
    let [n, c, k, m] = t.shape();
    if n != 2 || c != 1 {
        return Err(shape_err(format!("expected a real/imaginary plane pair, got {:?}", t.shape())));
    }
    let (re, im) = (t.sample(0), t.sample(1));
    Ok(CMatrix::from_shape_fn((k, m), |(i, j)| {
        Complex64::new(re[i * m + j].f64(), im[i * m + j].f64())
    }))
}

/// Normalizes `est`, refines both planes, reassembles and denormalizes.
pub fn refine_estimate<T: Real, R: Refiner<T>>(
    model: &mut R,
    est: &EstimateGrid,
    kind: EstimateKind,
) -> Result<EstimateGrid> {
    let (normalized, state) = minmax_normalize(est)?;
    let out = model.refine_planes(&grid_to_planes(&normalized))?;
    let grid = planes_to_grid(&out)?;
    Ok(EstimateGrid {
        values: minmax_denormalize(&grid, &state),
        kind,
    })
}
