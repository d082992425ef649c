//! Column-wise DFT helpers.
//!
//! Forward: `X(k) = sum_n x(n) e^{-j 2 pi k n / N}` (no scaling).
//! Inverse: `x(n) = (1/N) sum_k X(k) e^{+j 2 pi k n / N}`.

use std::cell::RefCell;

use ndarray::Axis;
use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::CMatrix;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn transform_columns(input: &CMatrix, inverse: bool) -> CMatrix {
    let n = input.nrows();
    let mut out = input.clone();
    if n == 0 {
        return out;
    }
    let fft = PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(n)
        } else {
            p.plan_fft_forward(n)
        }
    });
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let scale = if inverse { 1.0 / n as f64 } else { 1.0 };
    for mut col in out.axis_iter_mut(Axis(1)) {
        for (b, v) in buf.iter_mut().zip(col.iter()) {
            *b = *v;
        }
        fft.process(&mut buf);
        for (v, b) in col.iter_mut().zip(buf.iter()) {
            *v = *b * scale;
        }
    }
    out
}

/// Forward DFT of every column.
pub fn forward_columns(input: &CMatrix) -> CMatrix {
    transform_columns(input, false)
}

/// Inverse DFT (with `1/N`) of every column.
pub fn inverse_columns(input: &CMatrix) -> CMatrix {
    transform_columns(input, true)
}
