use crate::error::{shape_err, Result};
use crate::param::Param;
use crate::real::Real;
use crate::tensor::Tensor;

/// Kernel, stride and zero-padding of a 2-D sliding window, as `(rows, cols)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub pad: (usize, usize),
}

impl Window {
    pub fn new(kernel: (usize, usize), stride: (usize, usize), pad: (usize, usize)) -> Self {
        Self { kernel, stride, pad }
    }

    /// Stride-1 window that preserves the spatial shape for odd kernels.
    pub fn same(k: usize) -> Self {
        Self::new((k, k), (1, 1), (k / 2, k / 2))
    }

    fn kk(&self) -> usize {
        self.kernel.0 * self.kernel.1
    }

    /// Output extent of a convolution over an `h x w` input.
    pub fn conv_out(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let ax = |n: usize, k: usize, s: usize, p: usize| {
            let span = n + 2 * p;
            if span < k || s == 0 {
                None
            } else {
                Some((span - k) / s + 1)
            }
        };
        match (
            ax(h, self.kernel.0, self.stride.0, self.pad.0),
            ax(w, self.kernel.1, self.stride.1, self.pad.1),
        ) {
            (Some(a), Some(b)) => Ok((a, b)),
            _ => Err(shape_err(format!("window {self:?} does not fit a {h}x{w} input"))),
        }
    }

    /// Output extent of the transposed convolution over an `h x w` input.
    pub fn transpose_out(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let ax = |n: usize, k: usize, s: usize, p: usize| ((n.max(1) - 1) * s + k).checked_sub(2 * p);
        match (
            ax(h, self.kernel.0, self.stride.0, self.pad.0),
            ax(w, self.kernel.1, self.stride.1, self.pad.1),
        ) {
            (Some(a), Some(b)) if a > 0 && b > 0 && h > 0 && w > 0 => Ok((a, b)),
            _ => Err(shape_err(format!("transposed window {self:?} does not fit a {h}x{w} input"))),
        }
    }
}

/// Unfolds `img` (`c x h x w`) into `col` (`c*kh*kw x oh*ow`).
fn im2col<T: Real>(img: &[T], c: usize, h: usize, w: usize, win: &Window, oh: usize, ow: usize, col: &mut [T]) {
    let (kh, kw) = win.kernel;
    let (sh, sw) = win.stride;
    let (ph, pw) = win.pad;
    let plane = oh * ow;
    for ci in 0..c {
        let src = &img[ci * h * w..(ci + 1) * h * w];
        for ki in 0..kh {
            for kj in 0..kw {
                let row = &mut col[((ci * kh + ki) * kw + kj) * plane..][..plane];
                for oy in 0..oh {
                    let dst = &mut row[oy * ow..(oy + 1) * ow];
                    let iy = (oy * sh + ki) as isize - ph as isize;
                    if iy < 0 || iy >= h as isize {
                        dst.fill(T::zero());
                        continue;
                    }
                    let line = &src[iy as usize * w..(iy as usize + 1) * w];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * sw + kj) as isize - pw as isize;
                        *d = if ix < 0 || ix >= w as isize { T::zero() } else { line[ix as usize] };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates `col` back into `img`, which is zeroed first.
fn col2im<T: Real>(col: &[T], c: usize, h: usize, w: usize, win: &Window, oh: usize, ow: usize, img: &mut [T]) {
    let (kh, kw) = win.kernel;
    let (sh, sw) = win.stride;
    let (ph, pw) = win.pad;
    let plane = oh * ow;
    img.fill(T::zero());
    for ci in 0..c {
        let dst = &mut img[ci * h * w..(ci + 1) * h * w];
        for ki in 0..kh {
            for kj in 0..kw {
                let row = &col[((ci * kh + ki) * kw + kj) * plane..][..plane];
                for oy in 0..oh {
                    let iy = (oy * sh + ki) as isize - ph as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let line = &mut dst[iy as usize * w..(iy as usize + 1) * w];
                    for (ox, &v) in row[oy * ow..(oy + 1) * ow].iter().enumerate() {
                        let ix = (ox * sw + kj) as isize - pw as isize;
                        if ix >= 0 && ix < w as isize {
                            line[ix as usize] += v;
                        }
                    }
                }
            }
        }
    }
}

fn add_bias<T: Real>(out: &mut [T], bias: &[T], plane: usize) {
    for (chunk, &b) in out.chunks_mut(plane).zip(bias) {
        chunk.iter_mut().for_each(|v| *v += b);
    }
}

fn accumulate_bias_grad<T: Real>(grad: &[T], bias_grad: &mut [T], plane: usize) {
    for (chunk, g) in grad.chunks(plane).zip(bias_grad.iter_mut()) {
        *g += chunk.iter().copied().sum::<T>();
    }
}

/// 2-D convolution (cross-correlation) with weight `[out, in, kh, kw]`.
#[derive(Debug, Clone)]
pub struct Conv2d<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    pub window: Window,
    input: Option<Tensor<T>>,
}

impl<T: Real> Conv2d<T> {
    pub fn new(tag: &str, in_c: usize, out_c: usize, window: Window) -> Self {
        let (kh, kw) = window.kernel;
        Self {
            weight: Param::new(format!("{tag}.weight"), tag, Tensor::zeros([out_c, in_c, kh, kw])),
            bias: Param::new(format!("{tag}.bias"), tag, Tensor::zeros([1, out_c, 1, 1])),
            window,
            input: None,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.weight.value.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.value.shape()[0]
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let [n, c, h, w] = x.shape();
        if c != self.in_channels() {
            return Err(shape_err(format!("conv expects {} channels, got {c}", self.in_channels())));
        }
        let (oh, ow) = self.window.conv_out(h, w)?;
        let out_c = self.out_channels();
        let ckk = c * self.window.kk();
        let mut col = vec![T::zero(); ckk * oh * ow];
        let mut out = Tensor::zeros([n, out_c, oh, ow]);
        for b in 0..n {
            im2col(x.sample(b), c, h, w, &self.window, oh, ow, &mut col);
            let y = out.sample_mut(b);
            T::gemm(false, false, out_c, oh * ow, ckk, T::one(), self.weight.value.data(), &col, T::zero(), y);
            add_bias(y, self.bias.value.data(), oh * ow);
        }
        self.input = Some(x.clone());
        Ok(out)
    }

    pub fn backward(&mut self, grad: &Tensor<T>, need_input_grad: bool) -> Result<Option<Tensor<T>>> {
        let x = self.input.as_ref().ok_or_else(|| shape_err("conv backward before forward"))?;
        let [n, c, h, w] = x.shape();
        let (oh, ow) = self.window.conv_out(h, w)?;
        let out_c = self.out_channels();
        if grad.shape() != [n, out_c, oh, ow] {
            return Err(shape_err(format!("conv grad shape {:?}", grad.shape())));
        }
        let ckk = c * self.window.kk();
        let train_w = self.weight.trainable;
        let mut col = vec![T::zero(); ckk * oh * ow];
        let mut dx = need_input_grad.then(|| Tensor::zeros(x.shape()));
        for b in 0..n {
            let gy = grad.sample(b);
            if train_w {
                im2col(x.sample(b), c, h, w, &self.window, oh, ow, &mut col);
                T::gemm(false, true, out_c, ckk, oh * ow, T::one(), gy, &col, T::one(), self.weight.grad.data_mut());
            }
            if self.bias.trainable {
                accumulate_bias_grad(gy, self.bias.grad.data_mut(), oh * ow);
            }
            if let Some(dx) = dx.as_mut() {
                T::gemm(true, false, ckk, oh * ow, out_c, T::one(), self.weight.value.data(), gy, T::zero(), &mut col);
                col2im(&col, c, h, w, &self.window, oh, ow, dx.sample_mut(b));
            }
        }
        Ok(dx)
    }
}

/// Transposed 2-D convolution with weight `[in, out, kh, kw]`; the adjoint of
/// [`Conv2d`] with the same window.
#[derive(Debug, Clone)]
pub struct ConvTranspose2d<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    pub window: Window,
    input: Option<Tensor<T>>,
}

impl<T: Real> ConvTranspose2d<T> {
    pub fn new(tag: &str, in_c: usize, out_c: usize, window: Window) -> Self {
        let (kh, kw) = window.kernel;
        Self {
            weight: Param::new(format!("{tag}.weight"), tag, Tensor::zeros([in_c, out_c, kh, kw])),
            bias: Param::new(format!("{tag}.bias"), tag, Tensor::zeros([1, out_c, 1, 1])),
            window,
            input: None,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.weight.value.shape()[0]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.value.shape()[1]
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let [n, c, h, w] = x.shape();
        if c != self.in_channels() {
            return Err(shape_err(format!("transposed conv expects {} channels, got {c}", self.in_channels())));
        }
        let (oh, ow) = self.window.transpose_out(h, w)?;
        let out_c = self.out_channels();
        let okk = out_c * self.window.kk();
        let mut col = vec![T::zero(); okk * h * w];
        let mut out = Tensor::zeros([n, out_c, oh, ow]);
        for b in 0..n {
            T::gemm(true, false, okk, h * w, c, T::one(), self.weight.value.data(), x.sample(b), T::zero(), &mut col);
            let y = out.sample_mut(b);
            col2im(&col, out_c, oh, ow, &self.window, h, w, y);
            add_bias(y, self.bias.value.data(), oh * ow);
        }
        self.input = Some(x.clone());
        Ok(out)
    }

    pub fn backward(&mut self, grad: &Tensor<T>, need_input_grad: bool) -> Result<Option<Tensor<T>>> {
        let x = self.input.as_ref().ok_or_else(|| shape_err("transposed conv backward before forward"))?;
        let [n, c, h, w] = x.shape();
        let (oh, ow) = self.window.transpose_out(h, w)?;
        let out_c = self.out_channels();
        if grad.shape() != [n, out_c, oh, ow] {
            return Err(shape_err(format!("transposed conv grad shape {:?}", grad.shape())));
        }
        let okk = out_c * self.window.kk();
        let mut col = vec![T::zero(); okk * h * w];
        let mut dx = need_input_grad.then(|| Tensor::zeros(x.shape()));
        for b in 0..n {
            let gy = grad.sample(b);
            if self.bias.trainable {
                accumulate_bias_grad(gy, self.bias.grad.data_mut(), oh * ow);
            }
            if !self.weight.trainable && dx.is_none() {
                continue;
            }
            im2col(gy, out_c, oh, ow, &self.window, h, w, &mut col);
            if self.weight.trainable {
                T::gemm(false, true, c, okk, h * w, T::one(), x.sample(b), &col, T::one(), self.weight.grad.data_mut());
            }
            if let Some(dx) = dx.as_mut() {
                T::gemm(false, false, c, h * w, okk, T::one(), self.weight.value.data(), &col, T::zero(), dx.sample_mut(b));
            }
        }
        Ok(dx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn direct_conv(x: &[f64], c: usize, h: usize, w: usize, wt: &[f64], oc: usize, win: &Window) -> Vec<f64> {
        let (kh, kw) = win.kernel;
        let (oh, ow) = win.conv_out(h, w).unwrap();
        let mut out = vec![0.0; oc * oh * ow];
        for o in 0..oc {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = 0.0;
                    for ci in 0..c {
                        for ki in 0..kh {
                            for kj in 0..kw {
                                let iy = (oy * win.stride.0 + ki) as isize - win.pad.0 as isize;
                                let ix = (ox * win.stride.1 + kj) as isize - win.pad.1 as isize;
                                if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                                    acc += x[(ci * h + iy as usize) * w + ix as usize]
                                        * wt[((o * c + ci) * kh + ki) * kw + kj];
                                }
                            }
                        }
                    }
                    out[(o * oh + oy) * ow + ox] = acc;
                }
            }
        }
        out
    }

    fn ramp(n: usize, s: f64) -> Vec<f64> {
        (0..n).map(|i| ((i as f64 + 1.0) * s).sin()).collect()
    }

    #[test]
    fn conv_matches_direct_sum() {
        let win = Window::new((4, 3), (2, 1), (1, 1));
        let (c, h, w, oc) = (3, 8, 5, 2);
        let mut conv = Conv2d::<f64>::new("t", c, oc, win);
        conv.weight.value.data_mut().copy_from_slice(&ramp(oc * c * 12, 0.37));
        let x = Tensor::from_vec([1, c, h, w], ramp(c * h * w, 0.91)).unwrap();
        let y = conv.forward(&x).unwrap();
        let want = direct_conv(x.data(), c, h, w, conv.weight.value.data(), oc, &win);
        for (a, b) in y.data().iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_kernel_passes_input_through() {
        let mut conv = Conv2d::<f64>::new("id", 1, 1, Window::same(1));
        conv.weight.value.data_mut()[0] = 1.0;
        let x = Tensor::from_vec([2, 1, 3, 4], ramp(24, 0.5)).unwrap();
        assert_eq!(conv.forward(&x).unwrap(), x);
    }

    #[test]
    fn transpose_is_adjoint_of_conv() {
        // <conv(x), y> == <x, convT(y)> with shared weights and zero bias.
        let win = Window::new((4, 4), (2, 2), (1, 1));
        let (c, oc, h, w) = (2, 3, 8, 6);
        let mut conv = Conv2d::<f64>::new("a", c, oc, win);
        conv.weight.value.data_mut().copy_from_slice(&ramp(oc * c * 16, 0.13));
        let mut convt = ConvTranspose2d::<f64>::new("b", oc, c, win);
        convt.weight.value.data_mut().copy_from_slice(conv.weight.value.data());
        let x = Tensor::from_vec([1, c, h, w], ramp(c * h * w, 0.77)).unwrap();
        let cx = conv.forward(&x).unwrap();
        let y = Tensor::from_vec(cx.shape(), ramp(cx.len(), 1.7)).unwrap();
        let ty = convt.forward(&y).unwrap();
        assert_eq!(ty.shape(), x.shape());
        let lhs: f64 = cx.data().iter().zip(y.data()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data().iter().zip(ty.data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));
    }

    #[test]
    fn rejects_wrong_channel_count() {
        let mut conv = Conv2d::<f32>::new("c", 2, 1, Window::same(3));
        assert!(conv.forward(&Tensor::zeros([1, 3, 4, 4])).is_err());
    }
}
