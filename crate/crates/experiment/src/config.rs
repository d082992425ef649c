//! Declarative experiment configuration.
//!
//! A config is a JSON document. Two profiles are built in: `desk`, small
//! enough to run end to end in minutes on one core, and `paper`, the full
//! 612-subcarrier setup with 3077 source and 1000 target samples.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chanest_core::channel_models::{QscmParams, Scene};
use chanest_core::estimators::EstimateKind;
use chanest_core::resource_grid::{GridConfig, PilotConfig};
use chanest_neural::train::TrainConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{config_err, Error, Result};

/// Scene shipped with the crate: four city blocks around a crossing with
/// the BS in the middle, plus two tall buildings far east and west.
pub const BUNDLED_SCENE: &str = include_str!("../assets/bundled_scene.json");

/// Value of `target.scene` selecting [`BUNDLED_SCENE`].
pub const BUNDLED: &str = "bundled";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Source,
    Target,
}

impl Domain {
    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Source => "source",
            Domain::Target => "target",
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            Domain::Source => 0,
            Domain::Target => 1,
        }
    }

    pub(crate) fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(Domain::Source),
            1 => Some(Domain::Target),
            _ => None,
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "source" => Ok(Domain::Source),
            "target" => Ok(Domain::Target),
            other => Err(config_err(format!("unknown domain {other:?}, expected source or target"))),
        }
    }
}

/// A learned refiner: estimator input kind plus architecture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    LsCnn,
    LiCnn,
    LsGan,
    LiGan,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::LsCnn, Method::LiCnn, Method::LsGan, Method::LiGan];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::LsCnn => "ls_cnn",
            Method::LiCnn => "li_cnn",
            Method::LsGan => "ls_gan",
            Method::LiGan => "li_gan",
        }
    }

    pub fn is_gan(self) -> bool {
        matches!(self, Method::LsGan | Method::LiGan)
    }

    /// Whether the model refines the interpolated (`li`) or raw LS grid.
    pub fn uses_interpolated_input(self) -> bool {
        matches!(self, Method::LiCnn | Method::LiGan)
    }

    pub fn estimate_kind(self) -> EstimateKind {
        match self {
            Method::LsCnn => EstimateKind::LsCnn,
            Method::LiCnn => EstimateKind::LiCnn,
            Method::LsGan => EstimateKind::LsGan,
            Method::LiGan => EstimateKind::LiGan,
        }
    }

    pub(crate) fn code(self) -> u64 {
        self as u64
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| config_err(format!("unknown method {s:?}")))
    }
}

/// Half-open index range `[start, end)`, written as `[start, end]` in JSON.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "[usize; 2]", into = "[usize; 2]")]
pub struct Split {
    pub start: usize,
    pub end: usize,
}

impl Split {
    pub fn new(start: usize, end: usize) -> Result<Self> {
        if start > end {
            return Err(config_err(format!("split [{start}, {end}) is reversed")));
        }
        Ok(Self { start, end })
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn overlaps(&self, other: &Split) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn indices(&self) -> std::ops::Range<usize> {
        self.start..self.end
    }
}

impl TryFrom<[usize; 2]> for Split {
    type Error = Error;

    fn try_from(v: [usize; 2]) -> Result<Self> {
        Split::new(v[0], v[1])
    }
}

impl From<Split> for [usize; 2] {
    fn from(s: Split) -> Self {
        [s.start, s.end]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Splits {
    pub source_train: Split,
    pub source_val: Split,
    pub target_finetune: Split,
    pub target_val: Split,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub samples: usize,
    #[serde(default)]
    pub qscm: QscmParams,
    /// Multiplies every generated channel.
    #[serde(default = "one")]
    pub amplitude_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub samples: usize,
    /// `"bundled"` or a path to a scene JSON file, relative to the config.
    pub scene: String,
    #[serde(default = "one")]
    pub amplitude_scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    /// Path sampling and UE placement.
    pub data: u64,
    /// AWGN realizations.
    pub noise: u64,
    /// Model initialization, shuffling and SNR draws.
    pub train: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub grid: GridConfig,
    #[serde(default)]
    pub pilots: PilotConfig,
    pub source: SourceSpec,
    pub target: TargetSpec,
    pub splits: Splits,
    pub snr_db: Vec<f64>,
    pub models: Vec<Method>,
    pub cnn_train: TrainConfig,
    pub gan_train: TrainConfig,
    pub cnn_finetune: TrainConfig,
    pub gan_finetune: TrainConfig,
    pub seeds: Seeds,
    /// Directory that relative scene paths resolve against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

#[derive(Serialize)]
struct HashInput<'a> {
    format: u32,
    domain: Domain,
    grid: &'a GridConfig,
    samples: usize,
    data_seed: u64,
    amplitude_scale: f64,
    qscm: Option<&'a QscmParams>,
    scene: Option<Scene>,
}

impl ExperimentConfig {
    /// `K = 72` grid, 512 source and 128 target samples.
    pub fn desk() -> Self {
        let grid = GridConfig {
            num_subcarriers: 72,
            num_symbols: 14,
            scs_khz: 30.0,
            carrier_hz: 3.4e9,
            cp_len: 8,
        };
        let cnn_train = TrainConfig {
            epochs: 5,
            ..TrainConfig::cnn_default()
        };
        let cnn_finetune = TrainConfig {
            learning_rate: 7e-4,
            epochs: 60,
            batch_size: 8,
            ..TrainConfig::cnn_default()
        };
        let gan_train = TrainConfig {
            epochs: 5,
            ..TrainConfig::gan_default()
        };
        let gan_finetune = TrainConfig {
            epochs: 20,
            ..TrainConfig::gan_default()
        };
        Self {
            grid,
            pilots: PilotConfig::default(),
            source: SourceSpec {
                samples: 512,
                qscm: QscmParams::default(),
                amplitude_scale: 1.0,
            },
            target: TargetSpec {
                samples: 128,
                scene: BUNDLED.to_string(),
                amplitude_scale: 1.0,
            },
            splits: Splits {
                source_train: Split { start: 0, end: 448 },
                source_val: Split { start: 448, end: 512 },
                target_finetune: Split { start: 0, end: 64 },
                target_val: Split { start: 64, end: 128 },
            },
            snr_db: vec![-5.0, 0.0, 5.0, 10.0, 15.0, 20.0],
            models: vec![Method::LsCnn, Method::LiCnn],
            cnn_train,
            gan_train,
            cnn_finetune,
            gan_finetune,
            seeds: Seeds { data: 0, noise: 1, train: 2 },
            base_dir: None,
        }
    }

    /// Full-size grid with 3077 source samples and a 300/700 target split.
    pub fn paper() -> Self {
        let mut c = Self::desk();
        c.grid = GridConfig::paper_default();
        c.source.samples = 3077;
        c.target.samples = 1000;
        c.splits = Splits {
            source_train: Split { start: 0, end: 2770 },
            source_val: Split { start: 2770, end: 3077 },
            target_finetune: Split { start: 0, end: 300 },
            target_val: Split { start: 300, end: 1000 },
        };
        c.snr_db = vec![-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0];
        c.models = Method::ALL.to_vec();
        c.cnn_train = TrainConfig::cnn_default();
        c.gan_train = TrainConfig::gan_default();
        c.cnn_finetune = TrainConfig::cnn_default();
        c.gan_finetune = TrainConfig::gan_default();
        c
    }

    pub fn profile(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk()),
            "paper" => Ok(Self::paper()),
            other => Err(config_err(format!("unknown profile {other:?}, expected desk or paper"))),
        }
    }

    /// Derives all three seeds from one number.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seeds = Seeds {
            data: seed.wrapping_mul(3),
            noise: seed.wrapping_mul(3).wrapping_add(1),
            train: seed.wrapping_mul(3).wrapping_add(2),
        };
        self
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text).map_err(|e| config_err(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut c = Self::from_json(&text)?;
        c.base_dir = path.parent().map(Path::to_path_buf);
        Ok(c)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.pilots.validate(&self.grid)?;
        self.source.qscm.validate()?;
        if self.snr_db.is_empty() {
            return Err(config_err("snr_db list is empty"));
        }
        if let Some(s) = self.snr_db.iter().find(|s| !s.is_finite()) {
            return Err(config_err(format!("snr_db entries must be finite, got {s}")));
        }
        for (what, scale) in [("source", self.source.amplitude_scale), ("target", self.target.amplitude_scale)] {
            if !(scale > 0.0 && scale.is_finite()) {
                return Err(config_err(format!("{what}.amplitude_scale must be positive")));
            }
        }
        let s = &self.splits;
        check_pair("source_train", s.source_train, "source_val", s.source_val, self.source.samples)?;
        check_pair("target_finetune", s.target_finetune, "target_val", s.target_val, self.target.samples)?;
        for m in &self.models {
            if self.models.iter().filter(|x| *x == m).count() > 1 {
                return Err(config_err(format!("method {m} listed twice")));
            }
        }
        for cfg in [&self.cnn_train, &self.gan_train, &self.cnn_finetune, &self.gan_finetune] {
            cfg.validate().map_err(|e| config_err(e.to_string()))?;
        }
        Ok(())
    }

    pub fn samples(&self, domain: Domain) -> usize {
        match domain {
            Domain::Source => self.source.samples,
            Domain::Target => self.target.samples,
        }
    }

    pub fn amplitude_scale(&self, domain: Domain) -> f64 {
        match domain {
            Domain::Source => self.source.amplitude_scale,
            Domain::Target => self.target.amplitude_scale,
        }
    }

    /// Index range used for training (source) or fine-tuning (target).
    pub fn fit_split(&self, domain: Domain) -> Split {
        match domain {
            Domain::Source => self.splits.source_train,
            Domain::Target => self.splits.target_finetune,
        }
    }

    pub fn val_split(&self, domain: Domain) -> Split {
        match domain {
            Domain::Source => self.splits.source_val,
            Domain::Target => self.splits.target_val,
        }
    }

    pub fn scene(&self) -> Result<Scene> {
        if self.target.scene == BUNDLED {
            return Ok(Scene::from_json(BUNDLED_SCENE)?);
        }
        let path = Path::new(&self.target.scene);
        let full = match (&self.base_dir, path.is_relative()) {
            (Some(dir), true) => dir.join(path),
            _ => path.to_path_buf(),
        };
        Ok(Scene::load(&full)?)
    }

    /// SHA-256 over everything that determines the channels of `domain`.
    /// The scene enters by content, not by path.
    pub fn dataset_hash(&self, domain: Domain) -> Result<[u8; 32]> {
        let input = HashInput {
            format: crate::dataset::VERSION,
            domain,
            grid: &self.grid,
            samples: self.samples(domain),
            data_seed: self.seeds.data,
            amplitude_scale: self.amplitude_scale(domain),
            qscm: (domain == Domain::Source).then_some(&self.source.qscm),
            scene: match domain {
                Domain::Source => None,
                Domain::Target => Some(self.scene()?),
            },
        };
        Ok(Sha256::digest(serde_json::to_vec(&input)?).into())
    }
}

fn check_pair(a_name: &str, a: Split, b_name: &str, b: Split, samples: usize) -> Result<()> {
    if a.overlaps(&b) {
        return Err(config_err(format!("splits {a_name} and {b_name} overlap")));
    }
    for (name, s) in [(a_name, a), (b_name, b)] {
        if s.end > samples {
            return Err(config_err(format!("split {name} ends at {} but only {samples} samples exist", s.end)));
        }
        if s.is_empty() {
            return Err(config_err(format!("split {name} is empty")));
        }
    }
    Ok(())
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
