use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::param::Param;
use crate::real::Real;

/// Fan-in and fan-out of a conv weight `[a, b, kh, kw]`.
fn fans<T: Real>(p: &Param<T>, transposed: bool) -> (f64, f64) {
    let [a, b, kh, kw] = p.value.shape();
    let kk = (kh * kw) as f64;
    let (out_c, in_c) = if transposed { (b, a) } else { (a, b) };
    (in_c as f64 * kk, out_c as f64 * kk)
}

pub fn xavier_uniform<T: Real>(p: &mut Param<T>, gain: f64, transposed: bool, rng: &mut impl Rng) {
    let (fi, fo) = fans(p, transposed);
    let bound = gain * (6.0 / (fi + fo)).sqrt();
    for v in p.value.data_mut() {
        *v = T::of(rng.random_range(-bound..bound));
    }
}

pub fn normal<T: Real>(p: &mut Param<T>, mean: f64, std: f64, rng: &mut impl Rng) {
    let d = Normal::new(mean, std).expect("finite std");
    for v in p.value.data_mut() {
        *v = T::of(d.sample(rng));
    }
}
