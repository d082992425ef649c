//! Mini-batch training loops.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::cnn::Cnn;
use crate::error::{shape_err, Error, Result};
use crate::gan::Gan;
use crate::loss;
use crate::network::Network;
use crate::param::Mode;
use crate::real::Real;
use crate::tensor::Tensor;
use chanest_core::rng::{self, purpose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Weight of the L1 reconstruction term in the generator loss.
    pub l1_weight: f64,
    pub seed: u64,
    pub precision: Precision,
}

impl TrainConfig {
    pub fn cnn_default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            batch_size: 16,
            epochs: 10,
            l1_weight: 0.0,
            seed: 0,
            precision: Precision::F32,
        }
    }

    pub fn gan_default() -> Self {
        Self {
            learning_rate: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            batch_size: 8,
            epochs: 10,
            l1_weight: 100.0,
            seed: 0,
            precision: Precision::F32,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidArgument("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be at least 1".into()));
        }
        let beta_ok = |b: f64| (0.0..1.0).contains(&b);
        if !beta_ok(self.beta1) || !beta_ok(self.beta2) {
            return Err(Error::InvalidArgument("adam betas must lie in [0, 1)".into()));
        }
        if !(self.l1_weight >= 0.0) {
            return Err(Error::InvalidArgument("l1_weight must be non-negative".into()));
        }
        Ok(())
    }
}

/// Paired single-channel planes, row-major `rows x cols` each.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneSet {
    pub rows: usize,
    pub cols: usize,
    inputs: Vec<f64>,
    labels: Vec<f64>,
}

impl PlaneSet {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self { rows, cols, inputs: Vec::new(), labels: Vec::new() }
    }

    pub fn push(&mut self, input: &[f64], label: &[f64]) -> Result<()> {
        let n = self.rows * self.cols;
        if input.len() != n || label.len() != n {
            return Err(shape_err(format!("plane pair of {}/{} values, expected {n}", input.len(), label.len())));
        }
        self.inputs.extend_from_slice(input);
        self.labels.extend_from_slice(label);
        Ok(())
    }

    pub fn len(&self) -> usize {
        match self.rows * self.cols {
            0 => 0,
            n => self.inputs.len() / n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input(&self, i: usize) -> &[f64] {
        let n = self.rows * self.cols;
        &self.inputs[i * n..(i + 1) * n]
    }

    pub fn label(&self, i: usize) -> &[f64] {
        let n = self.rows * self.cols;
        &self.labels[i * n..(i + 1) * n]
    }

    /// Gathers `indices` into `[b, 1, rows, cols]` input and label tensors.
    pub fn batch<T: Real>(&self, indices: &[usize]) -> (Tensor<T>, Tensor<T>) {
        let n = self.rows * self.cols;
        let gather = |src: &[f64]| {
            let data = indices.iter().flat_map(|&i| src[i * n..(i + 1) * n].iter().map(|&v| T::of(v))).collect();
            Tensor::from_vec([indices.len(), 1, self.rows, self.cols], data).expect("consistent plane size")
        };
        (gather(&self.inputs), gather(&self.labels))
    }
}

/// Supplies the training pairs of one epoch.
pub trait PairSource {
    fn epoch_planes(&mut self, epoch: usize) -> Result<PlaneSet>;
}

impl PairSource for PlaneSet {
    fn epoch_planes(&mut self, _epoch: usize) -> Result<PlaneSet> {
        Ok(self.clone())
    }
}

/// Adapts a closure into a [`PairSource`].
pub struct EpochFn<F>(pub F);

impl<F: FnMut(usize) -> Result<PlaneSet>> PairSource for EpochFn<F> {
    fn epoch_planes(&mut self, epoch: usize) -> Result<PlaneSet> {
        (self.0)(epoch)
    }
}

fn epoch_batches(n: usize, cfg: &TrainConfig, epoch: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(cfg.seed, purpose::SHUFFLE, epoch as u64));
    order.chunks(cfg.batch_size).map(<[usize]>::to_vec).collect()
}

fn diverged(epoch: usize, what: &str, v: f64) -> Error {
    Error::TrainingDiverged { epoch, detail: format!("{what} is {v}") }
}

/// One Adam step on a mini-batch; returns the MSE before the update.
pub fn cnn_step<T: Real>(cnn: &mut Cnn<T>, x: &Tensor<T>, y: &Tensor<T>) -> Result<f64> {
    cnn.zero_grad();
    let out = cnn.forward(x, Mode::Train)?;
    let (l, g) = loss::mse(&out, y)?;
    cnn.backward(&g)?;
    cnn.adam_step();
    Ok(l.f64())
}

/// Trains with MSE. Returns the mean batch loss of every epoch.
pub fn train_cnn<T: Real>(cnn: &mut Cnn<T>, data: &mut dyn PairSource, cfg: &TrainConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    cnn.optimizer.learning_rate = cfg.learning_rate;
    cnn.optimizer.beta1 = cfg.beta1;
    cnn.optimizer.beta2 = cfg.beta2;
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let set = data.epoch_planes(epoch)?;
        if set.is_empty() {
            return Err(Error::InvalidArgument("training set is empty".into()));
        }
        let mut total = 0.0;
        let batches = epoch_batches(set.len(), cfg, epoch);
        for idx in &batches {
            let (x, y) = set.batch::<T>(idx);
            let l = cnn_step(cnn, &x, &y)?;
            if !l.is_finite() {
                return Err(diverged(epoch, "loss", l));
            }
            total += l;
        }
        let mean = total / batches.len() as f64;
        log::debug!("cnn epoch {epoch}: loss {mean:.6e}");
        history.push(mean);
    }
    Ok(history)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GanLosses {
    pub disc: f64,
    /// Adversarial part of the generator loss.
    pub gen_adv: f64,
    pub l1: f64,
}

impl GanLosses {
    fn is_finite(&self) -> bool {
        self.disc.is_finite() && self.gen_adv.is_finite() && self.l1.is_finite()
    }
}

/// One discriminator step followed by one generator step on unpadded planes.
pub fn gan_step<T: Real>(gan: &mut Gan<T>, x: &Tensor<T>, y: &Tensor<T>, l1_weight: f64) -> Result<GanLosses> {
    let x = gan.pad(x)?;
    let y = gan.pad(y)?;
    let half = T::of(0.5);
    let fake = gan.generator.forward(&x, Mode::Train)?;

    gan.zero_disc_grad();
    let real_logits = gan.discriminator.forward(&x, &y, Mode::Train)?;
    let (l_real, g_real) = loss::bce_with_logits(&real_logits, T::one())?;
    gan.discriminator.backward(&g_real.map(|v| v * half), false)?;
    let fake_logits = gan.discriminator.forward(&x, &fake, Mode::Train)?;
    let (l_fake, g_fake) = loss::bce_with_logits(&fake_logits, T::zero())?;
    gan.discriminator.backward(&g_fake.map(|v| v * half), false)?;
    gan.disc_step();

    gan.zero_gen_grad();
    let logits = gan.discriminator.forward(&x, &fake, Mode::Train)?;
    let (l_adv, g_adv) = loss::bce_with_logits(&logits, T::one())?;
    let mut grad = gan
        .discriminator
        .backward(&g_adv, true)?
        .ok_or_else(|| shape_err("discriminator produced no candidate gradient"))?;
    let (l_l1, g_l1) = loss::l1(&fake, &y)?;
    let w = T::of(l1_weight);
    for (g, &v) in grad.data_mut().iter_mut().zip(g_l1.data()) {
        *g += w * v;
    }
    gan.generator.backward(&grad)?;
    gan.gen_step();
    gan.zero_disc_grad();

    Ok(GanLosses {
        disc: half.f64() * (l_real.f64() + l_fake.f64()),
        gen_adv: l_adv.f64(),
        l1: l_l1.f64(),
    })
}

/// Alternating discriminator/generator training. Returns per-epoch mean losses.
pub fn train_gan<T: Real>(gan: &mut Gan<T>, data: &mut dyn PairSource, cfg: &TrainConfig) -> Result<Vec<GanLosses>> {
    cfg.validate()?;
    for opt in [&mut gan.gen_optimizer, &mut gan.disc_optimizer] {
        opt.learning_rate = cfg.learning_rate;
        opt.beta1 = cfg.beta1;
        opt.beta2 = cfg.beta2;
    }
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let set = data.epoch_planes(epoch)?;
        if set.is_empty() {
            return Err(Error::InvalidArgument("training set is empty".into()));
        }
        let batches = epoch_batches(set.len(), cfg, epoch);
        let mut sum = GanLosses { disc: 0.0, gen_adv: 0.0, l1: 0.0 };
        for idx in &batches {
            let (x, y) = set.batch::<T>(idx);
            let l = gan_step(gan, &x, &y, cfg.l1_weight)?;
            if !l.is_finite() {
                return Err(diverged(epoch, "GAN loss", l.disc + l.gen_adv + l.l1));
            }
            sum.disc += l.disc;
            sum.gen_adv += l.gen_adv;
            sum.l1 += l.l1;
        }
        let n = batches.len() as f64;
        let mean = GanLosses { disc: sum.disc / n, gen_adv: sum.gen_adv / n, l1: sum.l1 / n };
        log::debug!("gan epoch {epoch}: {mean:?}");
        history.push(mean);
    }
    Ok(history)
}
