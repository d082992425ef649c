//! Channel realizations for the two domains.
//!
//! * The quasi-static model builds `H(k, m)` directly in frequency; every
//!   column of a slot is the same vector.
//! * The map-based model places delayed taps `h(n, m)` in time from a set of
//!   traced rays and converts them to a grid with a forward DFT.
//!
//! Path delays are rounded to whole samples at `f_s = K * SCS` in both
//! models, so that with zero Doppler `impulse_to_grid(cdl_time_response(P))`
//! and `qscm_frequency_response(P)` describe the same channel.

mod sampler;
mod scene;

pub use sampler::{sample_qscm_paths, QscmParams};
pub use scene::{trace_paths, Building, Scene, UeRegion};

use std::f64::consts::PI;

use ndarray::{Array2, Axis};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dft;
use crate::error::{invalid, Error, Result};
use crate::resource_grid::GridConfig;
use crate::{CMatrix, SPEED_OF_LIGHT};

/// One propagation path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RayPath {
    pub amplitude: f64,
    /// Radians in `[0, 2 pi)`.
    pub phase: f64,
    pub delay_s: f64,
    pub doppler_hz: f64,
    pub aoa_az: f64,
    pub aoa_el: f64,
    pub aod_az: f64,
    pub aod_el: f64,
}

impl RayPath {
    pub fn new(amplitude: f64, phase: f64, delay_s: f64) -> Self {
        Self {
            amplitude,
            phase,
            delay_s,
            doppler_hz: 0.0,
            aoa_az: 0.0,
            aoa_el: 0.0,
            aod_az: 0.0,
            aod_el: 0.0,
        }
    }

    /// Delay in whole samples at `sample_rate_hz`.
    pub fn delay_samples(&self, sample_rate_hz: f64) -> usize {
        (self.delay_s * sample_rate_hz).round().max(0.0) as usize
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PathSet {
    pub paths: Vec<RayPath>,
    pub ue_position: [f64; 3],
}

impl PathSet {
    pub fn new(paths: Vec<RayPath>) -> Self {
        Self {
            paths,
            ue_position: [0.0; 3],
        }
    }

    /// True when no path reaches the UE.
    pub fn is_outage(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        for (i, p) in self.paths.iter().enumerate() {
            if !(p.amplitude >= 0.0) || !(p.delay_s >= 0.0) {
                return Err(invalid(format!("path {i} has negative amplitude or delay")));
            }
        }
        Ok(())
    }
}

/// True channel `H(k, m)`, `K x M`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelGrid {
    pub values: CMatrix,
}

impl ChannelGrid {
    pub fn shape(&self) -> (usize, usize) {
        self.values.dim()
    }
}

/// Time-domain taps `h(n, m)`, `N x M` with `N == K`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelImpulse {
    pub taps: CMatrix,
    pub sample_rate_hz: f64,
}

impl ChannelImpulse {
    /// Largest tap index holding a nonzero value, if any.
    pub fn max_tap_index(&self) -> Option<usize> {
        (0..self.taps.nrows())
            .rev()
            .find(|&n| self.taps.row(n).iter().any(|v| v.norm_sqr() > 0.0))
    }
}

/// Result of [`cdl_time_response`] with the number of paths that fell
/// outside the `N`-sample window.
#[derive(Debug, Clone)]
pub struct CdlResponse {
    pub impulse: ChannelImpulse,
    pub dropped_paths: usize,
}

/// Quasi-static frequency response. Doppler is ignored and all `M` columns
/// are copies of one computed column.
pub fn qscm_frequency_response(paths: &PathSet, grid: &GridConfig) -> Result<ChannelGrid> {
    grid.validate()?;
    paths.validate()?;
    let k_total = grid.num_subcarriers;
    let fs = grid.sample_rate_hz();
    let mut column = vec![Complex64::new(0.0, 0.0); k_total];
    for p in &paths.paths {
        let d = p.delay_samples(fs) as f64;
        for (k, h) in column.iter_mut().enumerate() {
            let angle = p.phase - 2.0 * PI * (k as f64) * d / k_total as f64;
            *h += Complex64::from_polar(p.amplitude, angle);
        }
    }
    let mut values = Array2::zeros(grid.shape());
    for mut col in values.axis_iter_mut(Axis(1)) {
        for (v, h) in col.iter_mut().zip(&column) {
            *v = *h;
        }
    }
    Ok(ChannelGrid { values })
}

/// Tap-delay-line response. Each path lands on tap `round(tau * f_s)`;
/// paths at or beyond `N` are dropped and counted.
pub fn cdl_time_response(paths: &PathSet, grid: &GridConfig) -> Result<CdlResponse> {
    grid.validate()?;
    paths.validate()?;
    let n_total = grid.num_subcarriers;
    let fs = grid.sample_rate_hz();
    let t_sym = grid.symbol_duration_s();
    let mut taps: CMatrix = Array2::zeros(grid.shape());
    let mut dropped = 0;
    for p in &paths.paths {
        let n = p.delay_samples(fs);
        if n >= n_total {
            dropped += 1;
            continue;
        }
        let intra = 2.0 * PI * p.doppler_hz * n as f64 / n_total as f64;
        for m in 0..grid.num_symbols {
            let across = 2.0 * PI * p.doppler_hz * m as f64 * t_sym;
            taps[[n, m]] += Complex64::from_polar(p.amplitude, p.phase + intra + across);
        }
    }
    if dropped > 0 {
        log::warn!("{dropped} path(s) beyond the {n_total}-sample window were dropped");
    }
    Ok(CdlResponse {
        impulse: ChannelImpulse {
            taps,
            sample_rate_hz: fs,
        },
        dropped_paths: dropped,
    })
}

/// Forward DFT along the sample axis of every symbol.
pub fn impulse_to_grid(impulse: &ChannelImpulse) -> ChannelGrid {
    ChannelGrid {
        values: dft::forward_columns(&impulse.taps),
    }
}

/// Inverse of [`impulse_to_grid`].
pub fn grid_to_impulse(grid: &ChannelGrid, sample_rate_hz: f64) -> ChannelImpulse {
    ChannelImpulse {
        taps: dft::inverse_columns(&grid.values),
        sample_rate_hz,
    }
}

/// Converts a grid to taps, checking it against the expected `K x M` shape.
pub fn grid_to_impulse_checked(grid: &ChannelGrid, config: &GridConfig) -> Result<ChannelImpulse> {
    if grid.shape() != config.shape() {
        return Err(Error::DimensionMismatch {
            expected: config.shape(),
            got: grid.shape(),
        });
    }
    Ok(grid_to_impulse(grid, config.sample_rate_hz()))
}

/// Free-space amplitude gain `c / (4 pi d f_c)`.
pub fn friis_amplitude(distance_m: f64, carrier_hz: f64) -> Result<f64> {
    if !(distance_m > 0.0) {
        return Err(invalid(format!("distance must be positive, got {distance_m}")));
    }
    if !(carrier_hz > 0.0) {
        return Err(invalid(format!("carrier must be positive, got {carrier_hz}")));
    }
    Ok(SPEED_OF_LIGHT / (4.0 * PI * distance_m * carrier_hz))
}
