//! CP-OFDM transmit/receive chain.
//!
//! Waveforms are stored as `(N_cp + N) x M` matrices, one CP-extended OFDM
//! symbol per column. The channel is applied as a linear convolution over the
//! whole slot, so the tail of symbol `m` leaks into the head (the CP) of
//! symbol `m + 1` exactly as it would on air.

use ndarray::{s, Array2};
use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};

use crate::channel_models::{ChannelGrid, ChannelImpulse};
use crate::dft;
use crate::error::{invalid, Error, Result};
use crate::resource_grid::{GridConfig, ResourceGrid};
use crate::CMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct OfdmWaveform {
    pub samples: CMatrix,
    pub cp_len: usize,
    pub sample_rate_hz: f64,
}

impl OfdmWaveform {
    /// Samples per symbol without CP.
    pub fn symbol_len(&self) -> usize {
        self.samples.nrows() - self.cp_len
    }

    pub fn num_symbols(&self) -> usize {
        self.samples.ncols()
    }

    /// Mean `|x|^2` over every sample.
    pub fn mean_power(&self) -> f64 {
        self.samples.iter().map(|v| v.norm_sqr()).sum::<f64>() / self.samples.len().max(1) as f64
    }
}

/// AWGN settings. `snr_db = +inf` disables noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub snr_db: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn noiseless() -> Self {
        Self {
            snr_db: f64::INFINITY,
            seed: 0,
        }
    }
}

fn check_shape(got: (usize, usize), expected: (usize, usize)) -> Result<()> {
    if got != expected {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// IDFT of every column followed by CP insertion.
pub fn ofdm_modulate(x: &ResourceGrid, grid: &GridConfig) -> Result<OfdmWaveform> {
    grid.validate()?;
    check_shape(x.shape(), grid.shape())?;
    let n = grid.num_subcarriers;
    let cp = grid.cp_len;
    let time = dft::inverse_columns(&x.values);
    let mut samples = Array2::zeros((cp + n, grid.num_symbols));
    samples.slice_mut(s![cp.., ..]).assign(&time);
    samples.slice_mut(s![..cp, ..]).assign(&time.slice(s![n - cp.., ..]));
    Ok(OfdmWaveform {
        samples,
        cp_len: cp,
        sample_rate_hz: grid.sample_rate_hz(),
    })
}

/// Convolves the slot with the per-symbol taps `h(., m)`.
///
/// Output sample `i` of symbol `m` is `sum_n h(n, m) s(pos_m + i - n)`, where
/// `s` is the concatenated transmit stream and `pos_m` the start of symbol
/// `m`. Energy past the end of the slot is discarded.
pub fn apply_channel(tx: &OfdmWaveform, h: &ChannelImpulse) -> Result<OfdmWaveform> {
    let n = tx.symbol_len();
    let sym_len = tx.samples.nrows();
    let m_total = tx.num_symbols();
    if h.taps.ncols() != m_total {
        return Err(Error::DimensionMismatch {
            expected: (n, m_total),
            got: h.taps.dim(),
        });
    }
    if h.taps.nrows() > n {
        return Err(invalid(format!(
            "channel has {} taps, more than the {n}-sample symbol",
            h.taps.nrows()
        )));
    }
    // Column-major stream of the whole slot.
    let stream: Vec<Complex64> = (0..m_total)
        .flat_map(|m| tx.samples.column(m).to_vec())
        .collect();
    let mut out = Array2::zeros((sym_len, m_total));
    for m in 0..m_total {
        let base = m * sym_len;
        for (tap, &coef) in h.taps.column(m).iter().enumerate() {
            if coef.norm_sqr() == 0.0 {
                continue;
            }
            for i in 0..sym_len {
                let pos = base + i;
                if pos >= tap {
                    out[[i, m]] += coef * stream[pos - tap];
                }
            }
        }
    }
    Ok(OfdmWaveform {
        samples: out,
        cp_len: tx.cp_len,
        sample_rate_hz: tx.sample_rate_hz,
    })
}

/// Adds circular complex Gaussian noise with per-sample variance
/// `reference_power / 10^(snr_db / 10)`.
pub fn add_awgn(rx: &OfdmWaveform, noise: NoiseSpec, reference_power: f64) -> Result<OfdmWaveform> {
    if !(reference_power > 0.0) || !reference_power.is_finite() {
        return Err(invalid(format!("reference power must be positive, got {reference_power}")));
    }
    if noise.snr_db.is_nan() || noise.snr_db == f64::NEG_INFINITY {
        return Err(invalid("snr_db must be a number or +inf"));
    }
    let mut out = rx.clone();
    if noise.snr_db == f64::INFINITY {
        return Ok(out);
    }
    let sigma2 = reference_power / 10f64.powf(noise.snr_db / 10.0);
    let scale = (sigma2 / 2.0).sqrt();
    let mut rng = crate::rng::stream(noise.seed, crate::rng::purpose::NOISE, 0);
    for v in out.samples.iter_mut() {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        *v += Complex64::new(scale * re, scale * im);
    }
    Ok(out)
}

/// CP removal and forward DFT of every symbol.
pub fn ofdm_demodulate(rx: &OfdmWaveform, grid: &GridConfig) -> Result<ResourceGrid> {
    grid.validate()?;
    check_shape(
        rx.samples.dim(),
        (grid.cp_len + grid.num_subcarriers, grid.num_symbols),
    )?;
    if rx.cp_len != grid.cp_len {
        return Err(invalid(format!("waveform CP {} != grid CP {}", rx.cp_len, grid.cp_len)));
    }
    let body = rx.samples.slice(s![grid.cp_len.., ..]).to_owned();
    Ok(ResourceGrid {
        values: dft::forward_columns(&body),
    })
}

/// `Y = X H + W`, elementwise.
pub fn freq_domain_oracle(x: &ResourceGrid, h: &ChannelGrid, w: &CMatrix) -> Result<ResourceGrid> {
    check_shape(h.shape(), x.shape())?;
    check_shape(w.dim(), x.shape())?;
    Ok(ResourceGrid {
        values: &x.values * &h.values + w,
    })
}
