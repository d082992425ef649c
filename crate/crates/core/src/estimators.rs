//! Classical pilot-based estimators and data conditioning.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel_models::ChannelGrid;
use crate::error::{invalid, Error, Result};
use crate::resource_grid::{PilotPosition, ResourceGrid};
use crate::CMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateKind {
    Ls,
    Li,
    LsCnn,
    LiCnn,
    LsGan,
    LiGan,
}

impl EstimateKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EstimateKind::Ls => "ls",
            EstimateKind::Li => "li",
            EstimateKind::LsCnn => "ls_cnn",
            EstimateKind::LiCnn => "li_cnn",
            EstimateKind::LsGan => "ls_gan",
            EstimateKind::LiGan => "li_gan",
        }
    }
}

impl fmt::Display for EstimateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EstimateKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "ls" => EstimateKind::Ls,
            "li" => EstimateKind::Li,
            "ls_cnn" => EstimateKind::LsCnn,
            "li_cnn" => EstimateKind::LiCnn,
            "ls_gan" => EstimateKind::LsGan,
            "li_gan" => EstimateKind::LiGan,
            other => return Err(invalid(format!("unknown estimate kind {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateGrid {
    pub values: CMatrix,
    pub kind: EstimateKind,
}

/// Pooled real/imaginary range of the grid a sample was scaled with.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormState {
    pub min_val: f64,
    pub max_val: f64,
}

impl NormState {
    fn scale(v: f64, lo: f64, hi: f64) -> f64 {
        2.0 * (v - lo) / (hi - lo) - 1.0
    }

    /// Maps a grid through this state's affine transform. Used for the input
    /// grid itself and for its training label.
    pub fn normalize(&self, g: &CMatrix) -> CMatrix {
        let (lo, hi) = (self.min_val, self.max_val);
        g.mapv(|v| Complex64::new(Self::scale(v.re, lo, hi), Self::scale(v.im, lo, hi)))
    }

    pub fn denormalize(&self, n: &CMatrix) -> CMatrix {
        let half = (self.max_val - self.min_val) / 2.0;
        let lo = self.min_val;
        n.mapv(|v| Complex64::new((v.re + 1.0) * half + lo, (v.im + 1.0) * half + lo))
    }
}

/// `Y / X` at the pilots, zero elsewhere.
pub fn ls_estimate(y: &ResourceGrid, x: &ResourceGrid, pilots: &[PilotPosition]) -> Result<EstimateGrid> {
    if y.shape() != x.shape() {
        return Err(Error::DimensionMismatch {
            expected: x.shape(),
            got: y.shape(),
        });
    }
    let mut h = Array2::zeros(x.shape());
    for p in pilots {
        let idx = [p.subcarrier, p.symbol];
        let xv = x.values[idx];
        if xv.norm_sqr() == 0.0 {
            return Err(invalid(format!("zero pilot amplitude at {p:?}")));
        }
        h[idx] = y.values[idx] / xv;
    }
    Ok(EstimateGrid {
        values: h,
        kind: EstimateKind::Ls,
    })
}

/// Linear interpolation of `(position, value)` anchors onto `0..len`,
/// holding the nearest anchor outside the anchor span.
fn interpolate_line(anchors: &[(usize, Complex64)], len: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); len];
    let (first, last) = (anchors[0], anchors[anchors.len() - 1]);
    for (i, o) in out.iter_mut().enumerate() {
        *o = if i <= first.0 {
            first.1
        } else if i >= last.0 {
            last.1
        } else {
            let j = anchors.partition_point(|a| a.0 <= i);
            let (p0, v0) = anchors[j - 1];
            let (p1, v1) = anchors[j];
            if p0 == i {
                v0
            } else {
                let t = (i - p0) as f64 / (p1 - p0) as f64;
                v0 * (1.0 - t) + v1 * t
            }
        };
    }
    out
}

/// Frequency-then-time linear interpolation of an LS estimate.
pub fn linear_interpolate(ls: &EstimateGrid, pilots: &[PilotPosition]) -> Result<EstimateGrid> {
    let (k_total, m_total) = ls.values.dim();
    let mut by_symbol: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for p in pilots {
        if p.subcarrier >= k_total || p.symbol >= m_total {
            return Err(invalid(format!("pilot {p:?} outside a {k_total}x{m_total} grid")));
        }
        by_symbol.entry(p.symbol).or_default().push(p.subcarrier);
    }
    if by_symbol.is_empty() {
        return Err(invalid("linear interpolation needs at least one DM-RS symbol"));
    }

    let mut dmrs_columns = Vec::with_capacity(by_symbol.len());
    for (&m, ks) in by_symbol.iter_mut() {
        ks.sort_unstable();
        ks.dedup();
        let anchors: Vec<(usize, Complex64)> = ks.iter().map(|&k| (k, ls.values[[k, m]])).collect();
        dmrs_columns.push((m, interpolate_line(&anchors, k_total)));
    }

    let mut out = Array2::zeros((k_total, m_total));
    for k in 0..k_total {
        let anchors: Vec<(usize, Complex64)> = dmrs_columns.iter().map(|(m, col)| (*m, col[k])).collect();
        for (m, v) in interpolate_line(&anchors, m_total).into_iter().enumerate() {
            out[[k, m]] = v;
        }
    }
    Ok(EstimateGrid {
        values: out,
        kind: EstimateKind::Li,
    })
}

/// Scales pooled real and imaginary parts onto `[-1, 1]`.
pub fn minmax_normalize(g: &EstimateGrid) -> Result<(CMatrix, NormState)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in g.values.iter() {
        for x in [v.re, v.im] {
            lo = lo.min(x);
            hi = hi.max(x);
        }
    }
    if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::DegenerateInput(format!(
            "cannot min-max scale a constant or non-finite grid (min {lo}, max {hi})"
        )));
    }
    let state = NormState { min_val: lo, max_val: hi };
    Ok((state.normalize(&g.values), state))
}

pub fn minmax_denormalize(n: &CMatrix, state: &NormState) -> CMatrix {
    state.denormalize(n)
}

/// `||est - truth||_F^2 / ||truth||_F^2`.
pub fn nmse(est: &CMatrix, truth: &ChannelGrid) -> Result<f64> {
    if est.dim() != truth.shape() {
        return Err(Error::DimensionMismatch {
            expected: truth.shape(),
            got: est.dim(),
        });
    }
    let den: f64 = truth.values.iter().map(|v| v.norm_sqr()).sum();
    if !(den > 0.0) {
        return Err(invalid("NMSE against an all-zero channel is undefined"));
    }
    let num: f64 = est.iter().zip(truth.values.iter()).map(|(a, b)| (a - b).norm_sqr()).sum();
    Ok(num / den)
}

pub fn to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

/// Mean of per-sample NMSE values, summed in order.
pub fn mean_nmse(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}
