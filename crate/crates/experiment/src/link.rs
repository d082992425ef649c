//! One slot through the full transmit/receive chain.

use chanest_core::channel_models::{grid_to_impulse_checked, ChannelGrid};
use chanest_core::estimators::{linear_interpolate, ls_estimate, EstimateGrid};
use chanest_core::ofdm_link::{add_awgn, apply_channel, ofdm_demodulate, ofdm_modulate, NoiseSpec, OfdmWaveform};
use chanest_core::resource_grid::{map_pilots, GridConfig, PilotConfig, PilotPosition, ResourceGrid};
use chanest_core::rng::{derive_seed, purpose};

use crate::config::Domain;
use crate::error::{dataset_err, Result};

/// Transmit side of a slot, shared by every link run with one grid.
#[derive(Debug, Clone)]
pub struct LinkContext {
    pub grid: GridConfig,
    pub tx: ResourceGrid,
    pub pilots: Vec<PilotPosition>,
    waveform: OfdmWaveform,
}

impl LinkContext {
    pub fn new(grid: &GridConfig, pilots: &PilotConfig) -> Result<Self> {
        let (tx, positions) = map_pilots(grid, pilots)?;
        let waveform = ofdm_modulate(&tx, grid)?;
        Ok(Self {
            grid: grid.clone(),
            tx,
            pilots: positions,
            waveform,
        })
    }

    /// Mean `|Y|^2` over the pilot resource elements of `y`.
    pub fn pilot_power(&self, y: &ResourceGrid) -> f64 {
        let total: f64 = self.pilots.iter().map(|p| y.values[[p.subcarrier, p.symbol]].norm_sqr()).sum();
        total / self.pilots.len().max(1) as f64
    }
}

#[derive(Debug, Clone)]
pub struct LinkOutput {
    pub ls: EstimateGrid,
    pub li: EstimateGrid,
    pub received: ResourceGrid,
}

/// Noise seed for one (sample, SNR, round) triple. Round 0 is reserved for
/// evaluation, training epoch `e` uses round `e + 1`.
pub fn noise_seed(base: u64, domain: Domain, sample: usize, snr_db: f64, round: u64) -> u64 {
    let s = derive_seed(base, purpose::NOISE, u64::from(domain.code()));
    let s = derive_seed(s, sample as u64, snr_db.to_bits());
    derive_seed(s, purpose::NOISE, round)
}

/// Maps pilots, passes them through `channel`, adds AWGN at `snr_db` and
/// returns the LS and LS-LI estimates. The noise variance is set so that
/// `snr_db` is the per-RE SNR at the pilots; `+inf` disables noise.
pub fn run_link(ctx: &LinkContext, channel: &ChannelGrid, snr_db: f64, seed: u64) -> Result<LinkOutput> {
    let impulse = grid_to_impulse_checked(channel, &ctx.grid)?;
    let rx = apply_channel(&ctx.waveform, &impulse)?;
    let received = if snr_db == f64::INFINITY {
        ofdm_demodulate(&rx, &ctx.grid)?
    } else {
        let clean = ofdm_demodulate(&rx, &ctx.grid)?;
        let power = ctx.pilot_power(&clean);
        if !(power > 0.0) {
            return Err(dataset_err("channel carries no power at the pilots"));
        }
        let reference = power / ctx.grid.num_subcarriers as f64;
        let noisy = add_awgn(&rx, NoiseSpec { snr_db, seed }, reference)?;
        ofdm_demodulate(&noisy, &ctx.grid)?
    };
    let ls = ls_estimate(&received, &ctx.tx, &ctx.pilots)?;
    let li = linear_interpolate(&ls, &ctx.pilots)?;
    Ok(LinkOutput { ls, li, received })
}
