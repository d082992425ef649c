//! On-disk channel datasets.
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic "CHESTDS\0" | version u32 | K u32 | M u32 | count u64 | domain u8 | hash [u8; 32] | flags u8
//! count x record:
//!   status u8 (bit 0: outage)
//!   K*M x (re f64, im f64), row-major
//!   if flags bit 0: ue_position 3 x f64 | path count u32 | per path 8 x f64
//! ```
//!
//! Path fields are stored in the order amplitude, phase, delay, Doppler,
//! AoA azimuth/elevation, AoD azimuth/elevation.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use chanest_core::channel_models::{
    cdl_time_response, impulse_to_grid, qscm_frequency_response, sample_qscm_paths, trace_paths, ChannelGrid,
    PathSet, RayPath, Scene,
};
use chanest_core::rng::{self, purpose};
use chanest_core::CMatrix;
use num_complex::Complex64;
use rand::Rng;

use crate::config::{hex, Domain, ExperimentConfig, Split};
use crate::error::{dataset_err, Error, Result};

pub const MAGIC: &[u8; 8] = b"CHESTDS\0";
pub const VERSION: u32 = 1;

const FLAG_PATHS: u8 = 1;
const STATUS_OUTAGE: u8 = 1;
const MAX_UE_DRAWS: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub channel: ChannelGrid,
    pub outage: bool,
    pub paths: Option<PathSet>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub domain: Domain,
    pub rows: usize,
    pub cols: usize,
    pub config_hash: [u8; 32],
    pub records: Vec<Record>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn outage_count(&self) -> usize {
        self.records.iter().filter(|r| r.outage).count()
    }

    /// Fails unless the file was generated from `config`.
    pub fn check_config(&self, config: &ExperimentConfig) -> Result<()> {
        let expected = config.dataset_hash(self.domain)?;
        if expected != self.config_hash {
            return Err(Error::HashMismatch {
                expected: hex(&expected),
                found: hex(&self.config_hash),
            });
        }
        Ok(())
    }

    /// Non-outage indices of `split`. Errors if the split leaves the file.
    pub fn usable(&self, split: Split) -> Result<Vec<usize>> {
        if split.end > self.len() {
            return Err(dataset_err(format!(
                "split [{}, {}) exceeds the {} records on file",
                split.start,
                split.end,
                self.len()
            )));
        }
        Ok(split.indices().filter(|&i| !self.records[i].outage).collect())
    }

    pub fn write(&self, w: impl Write) -> Result<()> {
        let mut w = BufWriter::new(w);
        let has_paths = self.records.iter().all(|r| r.paths.is_some());
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.rows as u32).to_le_bytes())?;
        w.write_all(&(self.cols as u32).to_le_bytes())?;
        w.write_all(&(self.records.len() as u64).to_le_bytes())?;
        w.write_all(&[self.domain.code()])?;
        w.write_all(&self.config_hash)?;
        w.write_all(&[if has_paths { FLAG_PATHS } else { 0 }])?;
        for r in &self.records {
            if r.channel.shape() != (self.rows, self.cols) {
                return Err(dataset_err(format!("record of shape {:?} in a {}x{} dataset", r.channel.shape(), self.rows, self.cols)));
            }
            w.write_all(&[if r.outage { STATUS_OUTAGE } else { 0 }])?;
            for v in r.channel.values.iter() {
                w.write_all(&v.re.to_le_bytes())?;
                w.write_all(&v.im.to_le_bytes())?;
            }
            if let (true, Some(p)) = (has_paths, &r.paths) {
                for c in p.ue_position {
                    w.write_all(&c.to_le_bytes())?;
                }
                w.write_all(&(p.paths.len() as u32).to_le_bytes())?;
                for ray in &p.paths {
                    for v in path_fields(ray) {
                        w.write_all(&v.to_le_bytes())?;
                    }
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write(File::create(path)?)
    }

    pub fn read(r: impl Read) -> Result<Self> {
        let mut r = BufReader::new(r);
        let mut magic = [0u8; 8];
        read_exact(&mut r, &mut magic, "header")?;
        if &magic != MAGIC {
            return Err(dataset_err("not a dataset file"));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(dataset_err(format!("unsupported dataset version {version}")));
        }
        let rows = read_u32(&mut r)? as usize;
        let cols = read_u32(&mut r)? as usize;
        let count = read_u64(&mut r)?;
        let domain_code = read_u8(&mut r)?;
        let domain = Domain::from_code(domain_code).ok_or_else(|| dataset_err(format!("unknown domain tag {domain_code}")))?;
        let mut config_hash = [0u8; 32];
        read_exact(&mut r, &mut config_hash, "header")?;
        let flags = read_u8(&mut r)?;
        if rows == 0 || cols == 0 {
            return Err(dataset_err("grid dimensions must be positive"));
        }

        let mut records = Vec::new();
        for _ in 0..count {
            let status = read_u8(&mut r)?;
            let mut values = CMatrix::zeros((rows, cols));
            for v in values.iter_mut() {
                *v = Complex64::new(read_f64(&mut r)?, read_f64(&mut r)?);
            }
            let paths = if flags & FLAG_PATHS != 0 {
                let ue_position = [read_f64(&mut r)?, read_f64(&mut r)?, read_f64(&mut r)?];
                let n = read_u32(&mut r)? as usize;
                let mut paths = Vec::with_capacity(n.min(1024));
                for _ in 0..n {
                    let mut f = [0.0; 8];
                    for v in &mut f {
                        *v = read_f64(&mut r)?;
                    }
                    paths.push(path_from_fields(f));
                }
                Some(PathSet { paths, ue_position })
            } else {
                None
            };
            records.push(Record {
                channel: ChannelGrid { values },
                outage: status & STATUS_OUTAGE != 0,
                paths,
            });
        }
        let mut extra = [0u8; 1];
        if r.read(&mut extra)? != 0 {
            return Err(dataset_err(format!("payload is longer than the {count} records in the header")));
        }
        Ok(Self {
            domain,
            rows,
            cols,
            config_hash,
            records,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read(File::open(path)?)
    }
}

fn path_fields(p: &RayPath) -> [f64; 8] {
    [p.amplitude, p.phase, p.delay_s, p.doppler_hz, p.aoa_az, p.aoa_el, p.aod_az, p.aod_el]
}

fn path_from_fields(f: [f64; 8]) -> RayPath {
    RayPath {
        amplitude: f[0],
        phase: f[1],
        delay_s: f[2],
        doppler_hz: f[3],
        aoa_az: f[4],
        aoa_el: f[5],
        aod_az: f[6],
        aod_el: f[7],
    }
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => dataset_err(format!("truncated {what}")),
        _ => Error::Io(e),
    })
}

fn read_u8(r: &mut impl Read) -> Result<u8> {
    let mut b = [0u8; 1];
    read_exact(r, &mut b, "record")?;
    Ok(b[0])
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, "record")?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b, "record")?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b, "record")?;
    Ok(f64::from_le_bytes(b))
}

fn draw(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

/// Uniform UE draw inside the scene's region, rejecting indoor points.
pub fn sample_ue_position(scene: &Scene, seed: u64, index: u64) -> Result<[f64; 3]> {
    let mut rng = rng::stream(seed, purpose::UE_POSITION, index);
    let reg = &scene.ue_region;
    for _ in 0..MAX_UE_DRAWS {
        let p = [draw(&mut rng, reg.min[0], reg.max[0]), draw(&mut rng, reg.min[1], reg.max[1]), reg.height];
        if !scene.is_inside_building(p) {
            return Ok(p);
        }
    }
    Err(dataset_err(format!("no outdoor UE position found after {MAX_UE_DRAWS} draws")))
}

fn scale_paths(paths: &mut PathSet, scale: f64) {
    for p in &mut paths.paths {
        p.amplitude *= scale;
    }
}

/// Synthesizes every channel of `domain`. Sample `i` depends only on the
/// config and `i`.
pub fn generate_dataset(config: &ExperimentConfig, domain: Domain) -> Result<Dataset> {
    config.validate()?;
    let grid = &config.grid;
    let count = config.samples(domain);
    let scale = config.amplitude_scale(domain);
    let scene = match domain {
        Domain::Target => Some(config.scene()?),
        Domain::Source => None,
    };
    let mut records = Vec::with_capacity(count);
    let mut dropped = 0usize;
    for i in 0..count as u64 {
        let (channel, paths) = match &scene {
            None => {
                let mut paths = sample_qscm_paths(&config.source.qscm, config.seeds.data, i)?;
                scale_paths(&mut paths, scale);
                (qscm_frequency_response(&paths, grid)?, paths)
            }
            Some(scene) => {
                let ue = sample_ue_position(scene, config.seeds.data, i)?;
                let mut paths = trace_paths(scene, ue, grid)?;
                scale_paths(&mut paths, scale);
                let cdl = cdl_time_response(&paths, grid)?;
                dropped += cdl.dropped_paths;
                (impulse_to_grid(&cdl.impulse), paths)
            }
        };
        records.push(Record {
            channel,
            outage: paths.is_outage(),
            paths: Some(paths),
        });
    }
    if dropped > 0 {
        log::warn!("{dropped} paths fell outside the {}-sample window", grid.num_subcarriers);
    }
    let blocked = records.iter().filter(|r| r.outage).count();
    if count > 0 && blocked == count {
        return Err(Error::AllBlocked {
            blocked,
            total: count,
            percent: 100.0,
        });
    }
    if blocked > 0 {
        log::info!("{domain}: {blocked} of {count} samples in outage");
    }
    let (rows, cols) = grid.shape();
    Ok(Dataset {
        domain,
        rows,
        cols,
        config_hash: config.dataset_hash(domain)?,
        records,
    })
}
