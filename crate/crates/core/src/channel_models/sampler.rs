use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use super::{PathSet, RayPath};
use crate::error::{invalid, Result};
use crate::rng::{self, purpose};

/// Parametric path distribution for the quasi-static source domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QscmParams {
    /// Inclusive range for the number of paths `L`.
    pub min_paths: usize,
    pub max_paths: usize,
    /// Range of the first-arrival delay, seconds.
    pub los_delay_s: [f64; 2],
    /// Mean of the exponential excess delay of later paths, seconds.
    pub delay_spread_s: f64,
    /// Range of the first-arrival amplitude (linear).
    pub los_amplitude: [f64; 2],
    /// Power decay constant: amplitude scales as `exp(-excess / decay)`.
    pub amplitude_decay_s: f64,
    /// Standard deviation of the log-normal amplitude jitter, dB.
    pub jitter_db: f64,
}

impl Default for QscmParams {
    fn default() -> Self {
        Self {
            min_paths: 2,
            max_paths: 8,
            los_delay_s: [0.0, 4.0e-7],
            delay_spread_s: 1.0e-7,
            los_amplitude: [5.0e-6, 2.0e-5],
            amplitude_decay_s: 1.5e-7,
            jitter_db: 3.0,
        }
    }
}

impl QscmParams {
    pub fn validate(&self) -> Result<()> {
        if self.min_paths > self.max_paths {
            return Err(invalid("min_paths must not exceed max_paths"));
        }
        let ordered = |r: [f64; 2]| r[0] >= 0.0 && r[0] <= r[1] && r[1].is_finite();
        if !ordered(self.los_delay_s) || !ordered(self.los_amplitude) {
            return Err(invalid("delay and amplitude ranges must be ordered and non-negative"));
        }
        if !(self.delay_spread_s > 0.0) || !(self.amplitude_decay_s > 0.0) || !(self.jitter_db >= 0.0) {
            return Err(invalid("delay spread, decay and jitter must be positive"));
        }
        Ok(())
    }

    pub fn mean_paths(&self) -> f64 {
        (self.min_paths + self.max_paths) as f64 / 2.0
    }
}

fn uniform(rng: &mut impl Rng, r: [f64; 2]) -> f64 {
    if r[1] > r[0] {
        rng.random_range(r[0]..r[1])
    } else {
        r[0]
    }
}

/// Draws the path set for `sample_index` from the stream `(seed, index)`.
pub fn sample_qscm_paths(params: &QscmParams, seed: u64, sample_index: u64) -> Result<PathSet> {
    params.validate()?;
    let mut rng = rng::stream(seed, purpose::PATHS, sample_index);
    let count = rng.random_range(params.min_paths..=params.max_paths);
    let excess = Exp::new(1.0 / params.delay_spread_s).map_err(|e| invalid(e.to_string()))?;
    let jitter = Normal::new(0.0, params.jitter_db).map_err(|e| invalid(e.to_string()))?;

    let first_delay = uniform(&mut rng, params.los_delay_s);
    let base_amp = uniform(&mut rng, params.los_amplitude);
    let mut delays = Vec::with_capacity(count);
    if count > 0 {
        delays.push(0.0);
    }
    for _ in 1..count {
        delays.push(excess.sample(&mut rng));
    }
    delays.sort_by(|a, b| a.total_cmp(b));

    let paths = delays
        .into_iter()
        .enumerate()
        .map(|(i, ex)| {
            let jit = if i == 0 { 0.0 } else { jitter.sample(&mut rng) };
            let amplitude = base_amp * (-ex / params.amplitude_decay_s).exp() * 10f64.powf(jit / 20.0);
            let mut p = RayPath::new(amplitude, rng.random_range(0.0..2.0 * PI), first_delay + ex);
            p.aoa_az = rng.random_range(-PI..PI);
            p.aod_az = rng.random_range(-PI..PI);
            p
        })
        .collect();
    Ok(PathSet::new(paths))
}
