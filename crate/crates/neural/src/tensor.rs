//! Dense NCHW tensors.

use crate::error::{shape_err, Result};
use crate::real::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: [usize; 4],
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn zeros(shape: [usize; 4]) -> Self {
        Self {
            shape,
            data: vec![T::zero(); shape.iter().product()],
        }
    }

    pub fn from_vec(shape: [usize; 4], data: Vec<T>) -> Result<Self> {
        let want: usize = shape.iter().product();
        if data.len() != want {
            return Err(shape_err(format!("{} values for shape {shape:?}", data.len())));
        }
        Ok(Self { shape, data })
    }

    pub fn filled(shape: [usize; 4], v: T) -> Self {
        Self {
            shape,
            data: vec![v; shape.iter().product()],
        }
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    pub fn channels(&self) -> usize {
        self.shape[1]
    }

    /// `(height, width)`.
    pub fn spatial(&self) -> (usize, usize) {
        (self.shape[2], self.shape[3])
    }

    /// Elements of one sample (`C * H * W`).
    pub fn sample_len(&self) -> usize {
        self.shape[1] * self.shape[2] * self.shape[3]
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn sample(&self, b: usize) -> &[T] {
        let n = self.sample_len();
        &self.data[b * n..(b + 1) * n]
    }

    pub fn sample_mut(&mut self, b: usize) -> &mut [T] {
        let n = self.sample_len();
        &mut self.data[b * n..(b + 1) * n]
    }

    pub fn reshape(mut self, shape: [usize; 4]) -> Result<Self> {
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(shape_err(format!("cannot reshape {:?} to {shape:?}", self.shape)));
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|v| U::of(v.f64())).collect(),
        }
    }

    /// Concatenates two tensors along the channel axis.
    pub fn concat_channels(a: &Self, b: &Self) -> Result<Self> {
        let [na, ca, ha, wa] = a.shape;
        let [nb, cb, hb, wb] = b.shape;
        if na != nb || ha != hb || wa != wb {
            return Err(shape_err(format!("cannot concat {:?} and {:?}", a.shape, b.shape)));
        }
        let mut data = Vec::with_capacity(a.len() + b.len());
        for i in 0..na {
            data.extend_from_slice(a.sample(i));
            data.extend_from_slice(b.sample(i));
        }
        Ok(Self {
            shape: [na, ca + cb, ha, wa],
            data,
        })
    }

    /// Inverse of [`Tensor::concat_channels`]: splits off the first `first`
    /// channels.
    pub fn split_channels(&self, first: usize) -> Result<(Self, Self)> {
        let [n, c, h, w] = self.shape;
        if first > c {
            return Err(shape_err(format!("cannot split {first} channels from {c}")));
        }
        let hw = h * w;
        let mut a = Vec::with_capacity(n * first * hw);
        let mut b = Vec::with_capacity(n * (c - first) * hw);
        for i in 0..n {
            let s = self.sample(i);
            a.extend_from_slice(&s[..first * hw]);
            b.extend_from_slice(&s[first * hw..]);
        }
        Ok((
            Self { shape: [n, first, h, w], data: a },
            Self { shape: [n, c - first, h, w], data: b },
        ))
    }

    /// Zero-pads (or crops, when smaller) the spatial axes at the bottom and
    /// right edges.
    pub fn resize_spatial(&self, h_out: usize, w_out: usize) -> Self {
        let [n, c, h, w] = self.shape;
        let mut out = Self::zeros([n, c, h_out, w_out]);
        for i in 0..n {
            for ch in 0..c {
                for r in 0..h.min(h_out) {
                    let src = ((i * c + ch) * h + r) * w;
                    let dst = ((i * c + ch) * h_out + r) * w_out;
                    let len = w.min(w_out);
                    out.data[dst..dst + len].copy_from_slice(&self.data[src..src + len]);
                }
            }
        }
        out
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        if self.shape != other.shape {
            return Err(shape_err(format!("cannot add {:?} to {:?}", other.shape, self.shape)));
        }
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }
}
