//! Pooled `|H(k, m)|` histograms.

use std::io::Write;

use crate::config::ExperimentConfig;
use crate::dataset::Dataset;
use crate::error::{config_err, Result};
use crate::link::{noise_seed, run_link, LinkContext};

/// `bins` equal-width bins over `[0, max]`; the last bin is closed.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn new(bins: usize, max: f64) -> Result<Self> {
        if bins == 0 {
            return Err(config_err("histogram needs at least one bin"));
        }
        if !(max > 0.0 && max.is_finite()) {
            return Err(config_err(format!("histogram range must be positive, got {max}")));
        }
        let edges = (0..=bins).map(|i| max * i as f64 / bins as f64).collect();
        Ok(Self { edges, counts: vec![0; bins] })
    }

    pub fn max(&self) -> f64 {
        *self.edges.last().expect("at least one bin")
    }

    /// Values above the range land in the last bin.
    pub fn add(&mut self, v: f64) {
        let bins = self.counts.len();
        let i = ((v / self.max()) * bins as f64).floor();
        let i = if i.is_nan() || i < 0.0 { 0 } else { (i as usize).min(bins - 1) };
        self.counts[i] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Upper edge of the highest nonempty bin.
    pub fn support(&self) -> f64 {
        self.counts.iter().rposition(|&c| c > 0).map_or(0.0, |i| self.edges[i + 1])
    }

    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "bin_lo,bin_hi,count")?;
        for (i, c) in self.counts.iter().enumerate() {
            writeln!(w, "{},{},{c}", self.edges[i], self.edges[i + 1])?;
        }
        Ok(())
    }
}

/// Magnitudes that enter the histogram: the true channels when `snr_db` is
/// `None`, otherwise the LS-LI estimates at that SNR. Outage samples count
/// as zero channels in the first case and are skipped in the second.
pub fn magnitudes(config: &ExperimentConfig, dataset: &Dataset, snr_db: Option<f64>) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(dataset.len() * dataset.rows * dataset.cols);
    match snr_db {
        None => {
            for r in &dataset.records {
                out.extend(r.channel.values.iter().map(|v| v.norm()));
            }
        }
        Some(snr) => {
            let ctx = LinkContext::new(&config.grid, &config.pilots)?;
            for (i, r) in dataset.records.iter().enumerate().filter(|(_, r)| !r.outage) {
                let link = run_link(&ctx, &r.channel, snr, noise_seed(config.seeds.noise, dataset.domain, i, snr, 0))?;
                out.extend(link.li.values.iter().map(|v| v.norm()));
            }
        }
    }
    Ok(out)
}

/// Histogram of [`magnitudes`]. `max` fixes the range so that several
/// datasets share bin edges; by default it is the largest magnitude (or 1
/// for an all-zero dataset).
pub fn histogram_magnitudes(
    config: &ExperimentConfig,
    dataset: &Dataset,
    snr_db: Option<f64>,
    bins: usize,
    max: Option<f64>,
) -> Result<Histogram> {
    if dataset.is_empty() {
        return Err(config_err("dataset is empty"));
    }
    let values = magnitudes(config, dataset, snr_db)?;
    let top = max.unwrap_or_else(|| match values.iter().copied().fold(0.0, f64::max) {
        m if m > 0.0 => m,
        _ => 1.0,
    });
    let mut h = Histogram::new(bins, top)?;
    for v in values {
        h.add(v);
    }
    Ok(h)
}
