//! Link-level building blocks for OFDM channel estimation experiments.
//!
//! The crate covers the physical layer end to end: DM-RS pilot generation
//! and resource-grid mapping, two channel models (a quasi-static frequency
//! response and a tap-delay-line impulse response fed by a small image-method
//! ray tracer), the CP-OFDM waveform chain with AWGN, and the classical
//! LS / LS-LI estimators together with min-max scaling and NMSE scoring.
//!
//! Grids are `K x M` complex matrices: rows are subcarriers, columns are
//! OFDM symbols. The DFT convention is fixed crate-wide: forward transform
//! without scaling, inverse transform with `1/N`.

pub mod channel_models;
pub mod dft;
pub mod error;
pub mod estimators;
pub mod ofdm_link;
pub mod resource_grid;
pub mod rng;

pub use error::{Error, Result};

/// Complex matrix used for every grid in the crate (`K` rows by `M` columns).
pub type CMatrix = ndarray::Array2<num_complex::Complex64>;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
