//! DM-RS pilot generation and resource-grid mapping.
//!
//! Single antenna port, configuration type 1 (comb-2 in frequency) and
//! mapping type A. Pilot `i` of a DM-RS symbol sits on subcarrier
//! `2 i + comb_offset`.

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::CMatrix;

/// Number of leading Gold-sequence outputs discarded (`N_c`).
const GOLD_OFFSET: usize = 1600;
const MASK31: u32 = 0x7fff_ffff;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub num_subcarriers: usize,
    pub num_symbols: usize,
    pub scs_khz: f64,
    pub carrier_hz: f64,
    pub cp_len: usize,
}

impl GridConfig {
    /// 612 subcarriers, 14 symbols, 30 kHz SCS at 3.4 GHz, 44-sample CP.
    pub fn paper_default() -> Self {
        Self {
            num_subcarriers: 612,
            num_symbols: 14,
            scs_khz: 30.0,
            carrier_hz: 3.4e9,
            cp_len: 44,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.num_subcarriers;
        if k < 2 || !k.is_multiple_of(2) {
            return Err(invalid(format!("num_subcarriers must be even and >= 2, got {k}")));
        }
        if self.num_symbols < 1 {
            return Err(invalid("num_symbols must be >= 1"));
        }
        if self.cp_len >= k {
            return Err(invalid(format!("cp_len {} must be < num_subcarriers {k}", self.cp_len)));
        }
        if !(self.scs_khz > 0.0 && self.scs_khz.is_finite()) {
            return Err(invalid("scs_khz must be positive"));
        }
        if !(self.carrier_hz > 0.0 && self.carrier_hz.is_finite()) {
            return Err(invalid("carrier_hz must be positive"));
        }
        Ok(())
    }

    /// `K * SCS`, the sample rate of one OFDM symbol's `N = K` samples.
    pub fn sample_rate_hz(&self) -> f64 {
        self.num_subcarriers as f64 * self.scs_khz * 1e3
    }

    /// Duration of one CP-extended OFDM symbol.
    pub fn symbol_duration_s(&self) -> f64 {
        (self.num_subcarriers + self.cp_len) as f64 / self.sample_rate_hz()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.num_subcarriers, self.num_symbols)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PilotConfig {
    pub dmrs_symbol_indices: Vec<usize>,
    #[serde(default)]
    pub comb_offset: usize,
    #[serde(default)]
    pub scrambling_id: u32,
    #[serde(default)]
    pub slot_number: u32,
}

impl Default for PilotConfig {
    fn default() -> Self {
        Self {
            dmrs_symbol_indices: vec![2, 11],
            comb_offset: 0,
            scrambling_id: 0,
            slot_number: 0,
        }
    }
}

impl PilotConfig {
    pub fn validate(&self, grid: &GridConfig) -> Result<()> {
        if self.dmrs_symbol_indices.is_empty() {
            return Err(invalid("at least one DM-RS symbol is required"));
        }
        if let Some(&m) = self.dmrs_symbol_indices.iter().find(|&&m| m >= grid.num_symbols) {
            return Err(invalid(format!(
                "DM-RS symbol {m} out of range for {} symbols",
                grid.num_symbols
            )));
        }
        let mut sorted = self.dmrs_symbol_indices.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.dmrs_symbol_indices.len() {
            return Err(invalid("duplicate DM-RS symbol index"));
        }
        if self.comb_offset > 1 {
            return Err(invalid(format!("comb_offset must be 0 or 1, got {}", self.comb_offset)));
        }
        Ok(())
    }

    /// DM-RS symbols in ascending order.
    pub fn sorted_symbols(&self) -> Vec<usize> {
        let mut s = self.dmrs_symbol_indices.clone();
        s.sort_unstable();
        s
    }
}

/// Transmit or receive grid `X(k, m)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResourceGrid {
    pub values: CMatrix,
}

impl ResourceGrid {
    pub fn zeros(grid: &GridConfig) -> Self {
        Self {
            values: Array2::zeros(grid.shape()),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values.dim()
    }
}

/// Pilot resource element `(k_p, m_p)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PilotPosition {
    pub subcarrier: usize,
    pub symbol: usize,
}

/// Length-31 Gold sequence `c(n)` for `n in 0..length`.
pub fn gold_sequence(c_init: u32, length: usize) -> Result<Vec<u8>> {
    if c_init > MASK31 {
        return Err(invalid(format!("c_init {c_init} does not fit in 31 bits")));
    }
    if length == 0 {
        return Err(invalid("gold sequence length must be >= 1"));
    }
    // Bit i of each state holds x(n + i).
    let mut x1: u32 = 1;
    let mut x2: u32 = c_init;
    let step = |x1: &mut u32, x2: &mut u32| {
        let n1 = (*x1 ^ (*x1 >> 3)) & 1;
        let n2 = (*x2 ^ (*x2 >> 1) ^ (*x2 >> 2) ^ (*x2 >> 3)) & 1;
        *x1 = ((*x1 >> 1) | (n1 << 30)) & MASK31;
        *x2 = ((*x2 >> 1) | (n2 << 30)) & MASK31;
    };
    for _ in 0..GOLD_OFFSET {
        step(&mut x1, &mut x2);
    }
    let mut out = Vec::with_capacity(length);
    for _ in 0..length {
        out.push(((x1 ^ x2) & 1) as u8);
        step(&mut x1, &mut x2);
    }
    Ok(out)
}

/// Scrambler seed for one DM-RS symbol.
pub fn dmrs_c_init(pilots: &PilotConfig, symbol_index: usize) -> u32 {
    let slot = pilots.slot_number as u64;
    let id = pilots.scrambling_id as u64;
    let sym = symbol_index as u64;
    let v = (1u64 << 17)
        .wrapping_mul(14 * slot + sym + 1)
        .wrapping_mul(2 * id + 1)
        .wrapping_add(2 * id);
    (v % (1u64 << 31)) as u32
}

/// QPSK DM-RS sequence of length `K/2` for one DM-RS symbol.
pub fn generate_dmrs_sequence(
    grid: &GridConfig,
    pilots: &PilotConfig,
    symbol_index: usize,
) -> Result<Vec<Complex64>> {
    grid.validate()?;
    pilots.validate(grid)?;
    if !pilots.dmrs_symbol_indices.contains(&symbol_index) {
        return Err(invalid(format!("symbol {symbol_index} does not carry DM-RS")));
    }
    let len = grid.num_subcarriers / 2;
    let bits = gold_sequence(dmrs_c_init(pilots, symbol_index), 2 * len)?;
    let a = std::f64::consts::FRAC_1_SQRT_2;
    Ok(bits
        .chunks_exact(2)
        .map(|b| Complex64::new(a * (1.0 - 2.0 * b[0] as f64), a * (1.0 - 2.0 * b[1] as f64)))
        .collect())
}

/// Builds the transmit grid and the pilot position list, sorted by
/// `(symbol, subcarrier)`.
pub fn map_pilots(grid: &GridConfig, pilots: &PilotConfig) -> Result<(ResourceGrid, Vec<PilotPosition>)> {
    grid.validate()?;
    pilots.validate(grid)?;
    let mut x = ResourceGrid::zeros(grid);
    let mut positions = Vec::with_capacity(grid.num_subcarriers / 2 * pilots.dmrs_symbol_indices.len());
    for m in pilots.sorted_symbols() {
        let seq = generate_dmrs_sequence(grid, pilots, m)?;
        for (i, s) in seq.into_iter().enumerate() {
            let k = 2 * i + pilots.comb_offset;
            x.values[[k, m]] = s;
            positions.push(PilotPosition { subcarrier: k, symbol: m });
        }
    }
    Ok((x, positions))
}
