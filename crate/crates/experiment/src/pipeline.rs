//! Training, fine-tuning and evaluation on generated datasets.
//!
//! Training pairs are rebuilt every epoch: each sample of the split gets an
//! SNR drawn uniformly from the config's list and a fresh noise realization,
//! so one epoch is one pass over the split. Real and imaginary parts enter
//! the networks as separate single-channel planes, both scaled with the
//! input estimate's min-max state.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chanest_adapt::{finetune_cnn, finetune_gan, freeze_for_transfer, FreezeMask, TransferKind};
use chanest_core::estimators::{minmax_normalize, nmse, to_db, EstimateGrid};
use chanest_core::rng::{derive_seed, purpose, stream};
use chanest_neural::checkpoint::{self, Manifest, ModelKind};
use chanest_neural::refine::{refine_estimate, split_planes};
use chanest_neural::train::{train_cnn, train_gan, EpochFn, GanLosses, PairSource, PlaneSet, Precision, TrainConfig};
use chanest_neural::{Cnn, CnnSpec, Gan, GanSpec, Real};
use rand::Rng;

use crate::config::{hex, Domain, ExperimentConfig, Method};
use crate::dataset::{generate_dataset, Dataset};
use crate::error::{config_err, dataset_err, Error, Result};
use crate::link::{noise_seed, run_link, LinkContext};

/// Method tag of the interpolation baseline in result tables.
pub const BASELINE: &str = "ls_li";
/// Suffix of methods evaluated with the source checkpoint on target data.
pub const NO_FINETUNE_SUFFIX: &str = "_noft";

const FINETUNE_SEED_OFFSET: u64 = 16;

pub fn checkpoint_path(dir: &Path, method: Method) -> PathBuf {
    dir.join(format!("{method}.ckpt"))
}

/// Copy of the source-domain checkpoint kept next to a fine-tuned one.
pub fn source_copy_path(dir: &Path, method: Method) -> PathBuf {
    dir.join(format!("{method}.source.ckpt"))
}

pub fn loss_path(dir: &Path, method: Method) -> PathBuf {
    dir.join(format!("{method}.loss.csv"))
}

/// A CNN or GAN refiner in either precision.
pub enum Model {
    Cnn32(Cnn<f32>),
    Cnn64(Cnn<f64>),
    Gan32(Gan<f32>),
    Gan64(Gan<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum LossHistory {
    Cnn(Vec<f64>),
    Gan(Vec<GanLosses>),
}

impl LossHistory {
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        match self {
            LossHistory::Cnn(h) => {
                writeln!(w, "epoch,mse")?;
                for (e, l) in h.iter().enumerate() {
                    writeln!(w, "{e},{l}")?;
                }
            }
            LossHistory::Gan(h) => {
                writeln!(w, "epoch,disc,gen_adv,l1")?;
                for (e, l) in h.iter().enumerate() {
                    writeln!(w, "{e},{},{},{}", l.disc, l.gen_adv, l.l1)?;
                }
            }
        }
        Ok(())
    }

    /// Final-epoch training objective (MSE, or generator L1 for the GAN).
    pub fn last(&self) -> Option<f64> {
        match self {
            LossHistory::Cnn(h) => h.last().copied(),
            LossHistory::Gan(h) => h.last().map(|l| l.l1),
        }
    }
}

impl Model {
    pub fn new(method: Method, config: &ExperimentConfig, precision: Precision) -> Result<Self> {
        let seed = derive_seed(config.seeds.train, purpose::INIT, method.code());
        let (k, m) = config.grid.shape();
        Ok(match (method.is_gan(), precision) {
            (false, Precision::F32) => Model::Cnn32(Cnn::new(CnnSpec::default(), seed)?),
            (false, Precision::F64) => Model::Cnn64(Cnn::new(CnnSpec::default(), seed)?),
            (true, Precision::F32) => Model::Gan32(Gan::new(GanSpec::for_grid(k, m), seed)?),
            (true, Precision::F64) => Model::Gan64(Gan::new(GanSpec::for_grid(k, m), seed)?),
        })
    }

    pub fn load(path: &Path) -> Result<(Self, Manifest)> {
        let manifest = checkpoint::read_manifest(fs::File::open(path)?)?;
        Ok(match (manifest.model, manifest.dtype.as_str()) {
            (ModelKind::Cnn, "f32") => wrap(checkpoint::load(path)?, Model::Cnn32),
            (ModelKind::Cnn, "f64") => wrap(checkpoint::load(path)?, Model::Cnn64),
            (ModelKind::Gan, "f32") => wrap(checkpoint::load(path)?, Model::Gan32),
            (ModelKind::Gan, "f64") => wrap(checkpoint::load(path)?, Model::Gan64),
            (_, other) => return Err(config_err(format!("checkpoint dtype {other:?} is not supported"))),
        })
    }

    pub fn save(&self, metadata: &BTreeMap<String, String>, path: &Path) -> Result<()> {
        match self {
            Model::Cnn32(m) => checkpoint::save(m, metadata, path)?,
            Model::Cnn64(m) => checkpoint::save(m, metadata, path)?,
            Model::Gan32(m) => checkpoint::save(m, metadata, path)?,
            Model::Gan64(m) => checkpoint::save(m, metadata, path)?,
        }
        Ok(())
    }

    pub fn is_gan(&self) -> bool {
        matches!(self, Model::Gan32(_) | Model::Gan64(_))
    }

    pub fn train(&mut self, data: &mut dyn PairSource, cfg: &TrainConfig) -> Result<LossHistory> {
        Ok(match self {
            Model::Cnn32(m) => LossHistory::Cnn(train_cnn(m, data, cfg)?),
            Model::Cnn64(m) => LossHistory::Cnn(train_cnn(m, data, cfg)?),
            Model::Gan32(m) => LossHistory::Gan(train_gan(m, data, cfg)?),
            Model::Gan64(m) => LossHistory::Gan(train_gan(m, data, cfg)?),
        })
    }

    /// Freezes the early layers, then retrains the rest.
    pub fn finetune(&mut self, data: &mut dyn PairSource, cfg: &TrainConfig) -> Result<(LossHistory, u64)> {
        Ok(match self {
            Model::Cnn32(m) => {
                let mask = freeze_for_transfer(TransferKind::Cnn, m);
                (LossHistory::Cnn(finetune_cnn(m, data, cfg, &mask)?), checksum(&mask, m))
            }
            Model::Cnn64(m) => {
                let mask = freeze_for_transfer(TransferKind::Cnn, m);
                (LossHistory::Cnn(finetune_cnn(m, data, cfg, &mask)?), checksum(&mask, m))
            }
            Model::Gan32(m) => {
                let mask = freeze_for_transfer(TransferKind::Gan, m);
                (LossHistory::Gan(finetune_gan(m, data, cfg, &mask)?), checksum(&mask, m))
            }
            Model::Gan64(m) => {
                let mask = freeze_for_transfer(TransferKind::Gan, m);
                (LossHistory::Gan(finetune_gan(m, data, cfg, &mask)?), checksum(&mask, m))
            }
        })
    }

    pub fn refine(&mut self, est: &EstimateGrid, method: Method) -> Result<EstimateGrid> {
        let kind = method.estimate_kind();
        Ok(match self {
            Model::Cnn32(m) => refine_estimate(m, est, kind)?,
            Model::Cnn64(m) => refine_estimate(m, est, kind)?,
            Model::Gan32(m) => refine_estimate(m, est, kind)?,
            Model::Gan64(m) => refine_estimate(m, est, kind)?,
        })
    }
}

fn wrap<M>(loaded: (M, Manifest), f: impl FnOnce(M) -> Model) -> (Model, Manifest) {
    (f(loaded.0), loaded.1)
}

fn checksum<T: Real, N: chanest_neural::Network<T>>(mask: &FreezeMask, model: &N) -> u64 {
    mask.frozen_checksum(model)
}

/// Builds one epoch of normalized plane pairs for `method`.
pub fn epoch_planes(
    config: &ExperimentConfig,
    dataset: &Dataset,
    ctx: &LinkContext,
    indices: &[usize],
    method: Method,
    seed: u64,
    epoch: usize,
) -> Result<PlaneSet> {
    let mut snr_rng = stream(seed, purpose::SNR_DRAW, epoch as u64);
    let mut set = PlaneSet::new(dataset.rows, dataset.cols);
    for &i in indices {
        let snr = config.snr_db[snr_rng.random_range(0..config.snr_db.len())];
        let truth = &dataset.records[i].channel;
        let out = run_link(ctx, truth, snr, noise_seed(config.seeds.noise, dataset.domain, i, snr, epoch as u64 + 1))?;
        let est = if method.uses_interpolated_input() { &out.li } else { &out.ls };
        let (x, state) = minmax_normalize(est)?;
        let y = state.normalize(&truth.values);
        let ((xr, xi), (yr, yi)) = (split_planes(&x), split_planes(&y));
        set.push(&xr, &yr)?;
        set.push(&xi, &yi)?;
    }
    Ok(set)
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub method: Method,
    pub checkpoint: PathBuf,
    pub losses: LossHistory,
}

fn base_metadata(config: &ExperimentConfig, dataset: &Dataset, method: Method, stage: &str, samples: usize) -> BTreeMap<String, String> {
    let snrs: Vec<String> = config.snr_db.iter().map(|s| s.to_string()).collect();
    BTreeMap::from([
        ("method".to_string(), method.to_string()),
        ("stage".to_string(), stage.to_string()),
        ("domain".to_string(), dataset.domain.to_string()),
        ("grid".to_string(), format!("{}x{}", dataset.rows, dataset.cols)),
        ("dataset_hash".to_string(), hex(&dataset.config_hash)),
        ("train_samples".to_string(), samples.to_string()),
        ("snr_db".to_string(), snrs.join(",")),
        ("snr_mixing".to_string(), "uniform draw from snr_db per sample and epoch".to_string()),
        ("epoch".to_string(), "one pass over the split with fresh SNR and noise per sample".to_string()),
        ("normalization".to_string(), "per-sample min-max of the input estimate".to_string()),
    ])
}

fn write_losses(dir: &Path, method: Method, losses: &LossHistory) -> Result<()> {
    let mut f = fs::File::create(loss_path(dir, method))?;
    losses.write_csv(&mut f)
}

fn fit_seed(config: &ExperimentConfig, method: Method, offset: u64) -> u64 {
    derive_seed(config.seeds.train, purpose::SHUFFLE, method.code() + offset)
}

fn usable_or_err(dataset: &Dataset, split: crate::config::Split, what: &str) -> Result<Vec<usize>> {
    let idx = dataset.usable(split)?;
    if idx.is_empty() {
        return Err(dataset_err(format!("{what} split has no usable (non-outage) samples")));
    }
    Ok(idx)
}

fn tag(method: Method) -> impl FnOnce(Error) -> Error {
    move |e| match e {
        Error::Neural(source) => Error::Model {
            model: method.to_string(),
            source,
        },
        Error::Adapt(chanest_adapt::Error::Neural(source)) => Error::Model {
            model: method.to_string(),
            source,
        },
        other => other,
    }
}

/// Trains every configured model on the source training split and writes
/// `<method>.ckpt` and `<method>.loss.csv` into `out_dir`.
pub fn train_source(config: &ExperimentConfig, dataset: &Dataset, out_dir: &Path) -> Result<Vec<TrainReport>> {
    if dataset.domain != Domain::Source {
        return Err(config_err("training expects a source-domain dataset"));
    }
    dataset.check_config(config)?;
    fs::create_dir_all(out_dir)?;
    let ctx = LinkContext::new(&config.grid, &config.pilots)?;
    let indices = usable_or_err(dataset, config.splits.source_train, "source_train")?;
    let mut reports = Vec::new();
    for &method in &config.models {
        let base = if method.is_gan() { &config.gan_train } else { &config.cnn_train };
        let cfg = TrainConfig {
            seed: fit_seed(config, method, 0),
            ..base.clone()
        };
        log::info!("training {method} on {} source samples for {} epochs", indices.len(), cfg.epochs);
        let mut model = Model::new(method, config, cfg.precision)?;
        let mut source =
            EpochFn(|epoch| epoch_planes(config, dataset, &ctx, &indices, method, cfg.seed, epoch).map_err(into_neural));
        let losses = model.train(&mut source, &cfg).map_err(tag(method))?;
        let mut meta = base_metadata(config, dataset, method, "source", indices.len());
        meta.insert("epochs".into(), cfg.epochs.to_string());
        let path = checkpoint_path(out_dir, method);
        model.save(&meta, &path)?;
        write_losses(out_dir, method, &losses)?;
        reports.push(TrainReport {
            method,
            checkpoint: path,
            losses,
        });
    }
    Ok(reports)
}

fn into_neural(e: Error) -> chanest_neural::Error {
    match e {
        Error::Neural(n) => n,
        Error::Core(c) => chanest_neural::Error::Core(c),
        other => chanest_neural::Error::InvalidArgument(other.to_string()),
    }
}

fn method_of(manifest: &Manifest, path: &Path) -> Result<Method> {
    manifest
        .metadata
        .get("method")
        .ok_or_else(|| config_err(format!("{} records no method", path.display())))?
        .parse()
}

/// Source checkpoints named by `from`: a single file, or a directory holding
/// `<method>.ckpt` for the configured methods.
fn source_checkpoints(config: &ExperimentConfig, from: &Path) -> Result<Vec<(Method, PathBuf)>> {
    if from.is_dir() {
        let found: Vec<_> = config
            .models
            .iter()
            .map(|&m| (m, checkpoint_path(from, m)))
            .filter(|(_, p)| p.is_file())
            .collect();
        if found.is_empty() {
            return Err(config_err(format!("no source checkpoints in {}", from.display())));
        }
        Ok(found)
    } else {
        let manifest = checkpoint::read_manifest(fs::File::open(from)?)?;
        Ok(vec![(method_of(&manifest, from)?, from.to_path_buf())])
    }
}

/// Fine-tunes source checkpoints on the target fine-tune split. Writes the
/// adapted `<method>.ckpt` plus an untouched `<method>.source.ckpt` copy so
/// that evaluation can report the non-fine-tuned baseline from one folder.
pub fn finetune_target(config: &ExperimentConfig, dataset: &Dataset, from: &Path, out_dir: &Path) -> Result<Vec<TrainReport>> {
    if dataset.domain != Domain::Target {
        return Err(config_err("fine-tuning expects a target-domain dataset"));
    }
    dataset.check_config(config)?;
    if config.splits.target_finetune.overlaps(&config.splits.target_val) {
        return Err(config_err("target_finetune and target_val overlap"));
    }
    fs::create_dir_all(out_dir)?;
    let ctx = LinkContext::new(&config.grid, &config.pilots)?;
    let indices = usable_or_err(dataset, config.splits.target_finetune, "target_finetune")?;
    let mut reports = Vec::new();
    for (method, src) in source_checkpoints(config, from)? {
        let (mut model, manifest) = Model::load(&src)?;
        if model.is_gan() != method.is_gan() {
            return Err(config_err(format!("{} does not hold a {method} model", src.display())));
        }
        let base = if method.is_gan() { &config.gan_finetune } else { &config.cnn_finetune };
        let cfg = TrainConfig {
            seed: fit_seed(config, method, FINETUNE_SEED_OFFSET),
            ..base.clone()
        };
        log::info!("fine-tuning {method} on {} target samples for {} epochs", indices.len(), cfg.epochs);
        let mut source =
            EpochFn(|epoch| epoch_planes(config, dataset, &ctx, &indices, method, cfg.seed, epoch).map_err(into_neural));
        let (losses, frozen) = model.finetune(&mut source, &cfg).map_err(tag(method))?;

        let mut meta = base_metadata(config, dataset, method, "finetune", indices.len());
        meta.insert("epochs".into(), cfg.epochs.to_string());
        meta.insert("frozen_checksum".into(), format!("{frozen:016x}"));
        if let Some(h) = manifest.metadata.get("dataset_hash") {
            meta.insert("source_dataset_hash".into(), h.clone());
        }
        let copy = source_copy_path(out_dir, method);
        if fs::canonicalize(&src).ok() != fs::canonicalize(&copy).ok() {
            fs::copy(&src, &copy)?;
        }
        let path = checkpoint_path(out_dir, method);
        model.save(&meta, &path)?;
        write_losses(out_dir, method, &losses)?;
        reports.push(TrainReport {
            method,
            checkpoint: path,
            losses,
        });
    }
    Ok(reports)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub snr_db: f64,
    pub method: String,
    pub nmse_linear: f64,
    pub nmse_db: f64,
    pub n_samples: usize,
    pub seed: u64,
}

pub const CSV_HEADER: &str = "snr_db,method,nmse_linear,nmse_db,n_samples,seed";

pub fn write_results_csv(rows: &[ResultRow], mut w: impl Write) -> Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(w, "{},{},{},{},{},{}", r.snr_db, r.method, r.nmse_linear, r.nmse_db, r.n_samples, r.seed)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Evaluation {
    pub rows: Vec<ResultRow>,
    /// Methods that could not be evaluated, with the reason.
    pub missing: Vec<(String, String)>,
}

impl Evaluation {
    pub fn nmse(&self, method: &str, snr_db: f64) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.snr_db == snr_db)
            .map(|r| r.nmse_linear)
    }
}

struct Entry {
    name: String,
    method: Method,
    model: Model,
}

fn open_entry(name: String, method: Method, path: &Path, dataset: &Dataset, missing: &mut Vec<(String, String)>) -> Option<Entry> {
    let loaded = Model::load(path).and_then(|(model, manifest)| {
        if let Some(g) = manifest.metadata.get("grid") {
            let here = format!("{}x{}", dataset.rows, dataset.cols);
            if *g != here {
                return Err(config_err(format!("checkpoint grid {g} does not match dataset grid {here}")));
            }
        }
        if model.is_gan() != method.is_gan() {
            return Err(config_err(format!("checkpoint does not hold a {method} model")));
        }
        Ok(model)
    });
    match loaded {
        Ok(model) => Some(Entry { name, method, model }),
        Err(e) => {
            log::warn!("{name}: {e}");
            missing.push((name, format!("{}: {e}", path.display())));
            None
        }
    }
}

/// Mean NMSE per SNR and method on the dataset's validation split.
///
/// Methods are the LS-LI baseline plus every configured model found as
/// `<method>.ckpt` in `ckpt_dir`; with `no_finetune_baseline` the
/// `<method>.source.ckpt` copies are scored as `<method>_noft` as well.
/// Unloadable checkpoints are reported in [`Evaluation::missing`].
pub fn evaluate_sweep(
    config: &ExperimentConfig,
    dataset: &Dataset,
    ckpt_dir: &Path,
    no_finetune_baseline: bool,
) -> Result<Evaluation> {
    dataset.check_config(config)?;
    let split = config.val_split(dataset.domain);
    let indices = usable_or_err(dataset, split, "validation")?;
    let ctx = LinkContext::new(&config.grid, &config.pilots)?;
    let mut missing = Vec::new();
    let mut entries = Vec::new();
    for &m in &config.models {
        entries.extend(open_entry(m.to_string(), m, &checkpoint_path(ckpt_dir, m), dataset, &mut missing));
    }
    if no_finetune_baseline {
        for &m in &config.models {
            let name = format!("{m}{NO_FINETUNE_SUFFIX}");
            entries.extend(open_entry(name, m, &source_copy_path(ckpt_dir, m), dataset, &mut missing));
        }
    }

    let mut rows = Vec::new();
    for &snr in &config.snr_db {
        let mut baseline = Vec::with_capacity(indices.len());
        let mut scores = vec![Vec::with_capacity(indices.len()); entries.len()];
        for &i in &indices {
            let truth = &dataset.records[i].channel;
            let out = run_link(&ctx, truth, snr, noise_seed(config.seeds.noise, dataset.domain, i, snr, 0))?;
            baseline.push(nmse(&out.li.values, truth)?);
            for (e, s) in entries.iter_mut().zip(&mut scores) {
                let input = if e.method.uses_interpolated_input() { &out.li } else { &out.ls };
                let refined = e.model.refine(input, e.method).map_err(tag(e.method))?;
                s.push(nmse(&refined.values, truth)?);
            }
        }
        let mut push = |method: &str, values: &[f64]| {
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            rows.push(ResultRow {
                snr_db: snr,
                method: method.to_string(),
                nmse_linear: mean,
                nmse_db: to_db(mean),
                n_samples: values.len(),
                seed: config.seeds.noise,
            });
        };
        push(BASELINE, &baseline);
        for (e, s) in entries.iter().zip(&scores) {
            push(&e.name, s);
        }
    }
    Ok(Evaluation { rows, missing })
}

/// Entropic W1 distance between the non-outage channels of two datasets.
pub fn dataset_distance(
    a: &Dataset,
    b: &Dataset,
    epsilon: Option<f64>,
    max_iter: Option<usize>,
) -> Result<chanest_adapt::SinkhornResult> {
    let take = |d: &Dataset| -> Vec<_> { d.records.iter().filter(|r| !r.outage).map(|r| r.channel.values.clone()).collect() };
    let mut problem = chanest_adapt::OtProblem::new(take(a), take(b));
    problem.epsilon = epsilon;
    if let Some(n) = max_iter {
        problem.max_iter = n;
    }
    Ok(chanest_adapt::sinkhorn_w1(&problem)?)
}

/// Files written by [`run_experiment`].
#[derive(Debug, Clone)]
pub struct RunOutputs {
    pub source_dataset: PathBuf,
    pub target_dataset: PathBuf,
    pub source_dir: PathBuf,
    pub target_dir: PathBuf,
    pub source_csv: PathBuf,
    pub target_csv: PathBuf,
    pub source_eval: Evaluation,
    pub target_eval: Evaluation,
}

/// Generate both domains, train on source, fine-tune on target, and
/// evaluate both validation splits.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<RunOutputs> {
    fs::create_dir_all(out_dir)?;
    let source_dataset = out_dir.join("source.ds");
    let target_dataset = out_dir.join("target.ds");
    let source = generate_dataset(config, Domain::Source)?;
    source.save(&source_dataset)?;
    let target = generate_dataset(config, Domain::Target)?;
    target.save(&target_dataset)?;

    let source_dir = out_dir.join("source");
    let target_dir = out_dir.join("target");
    train_source(config, &source, &source_dir)?;
    finetune_target(config, &target, &source_dir, &target_dir)?;

    let source_eval = evaluate_sweep(config, &source, &source_dir, false)?;
    let target_eval = evaluate_sweep(config, &target, &target_dir, true)?;
    let source_csv = out_dir.join("source_results.csv");
    let target_csv = out_dir.join("target_results.csv");
    write_results_csv(&source_eval.rows, fs::File::create(&source_csv)?)?;
    write_results_csv(&target_eval.rows, fs::File::create(&target_csv)?)?;
    Ok(RunOutputs {
        source_dataset,
        target_dataset,
        source_dir,
        target_dir,
        source_csv,
        target_csv,
        source_eval,
        target_eval,
    })
}
