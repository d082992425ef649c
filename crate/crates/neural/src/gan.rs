//! U-Net generator and patch discriminator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::init;
use crate::layers::{ActivationKind, BatchNorm2d, Conv2d, ConvTranspose2d, Layer, Sequential, Window};
use crate::network::Network;
use crate::optim::Adam;
use crate::param::{Buffer, Mode, Param};
use crate::real::Real;
use crate::tensor::Tensor;
use chanest_core::rng::{self, purpose};

pub const ENCODER_STAGES: usize = 7;
pub const DISCRIMINATOR_STAGES: usize = 5;
/// Stages that halve both axes; the rest halve rows only.
const SQUARE_STAGES: usize = 4;
pub const ROW_MULTIPLE: usize = 1 << ENCODER_STAGES;
pub const COL_MULTIPLE: usize = 1 << SQUARE_STAGES;
const INIT_STD: f64 = 0.02;

pub fn encoder_tag(i: usize) -> String {
    format!("gen.enc{i}")
}

pub fn decoder_tag(i: usize) -> String {
    format!("gen.dec{i}")
}

pub const BOTTLENECK_TAG: &str = "gen.bottleneck";

pub fn disc_tag(i: usize) -> String {
    format!("disc.conv{i}")
}

/// Smallest padded shape the encoder stride pattern accepts.
pub fn padded_shape(rows: usize, cols: usize) -> (usize, usize) {
    (rows.div_ceil(ROW_MULTIPLE).max(1) * ROW_MULTIPLE, cols.div_ceil(COL_MULTIPLE).max(1) * COL_MULTIPLE)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GanSpec {
    pub encoder_widths: Vec<usize>,
    pub discriminator_widths: Vec<usize>,
    pub padded_rows: usize,
    pub padded_cols: usize,
}

impl GanSpec {
    pub fn for_grid(rows: usize, cols: usize) -> Self {
        let (padded_rows, padded_cols) = padded_shape(rows, cols);
        Self {
            encoder_widths: vec![32, 64, 128, 256, 256, 256, 256],
            discriminator_widths: vec![32, 64, 128, 256, 1],
            padded_rows,
            padded_cols,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.encoder_widths.len() != ENCODER_STAGES || self.discriminator_widths.len() != DISCRIMINATOR_STAGES {
            return Err(Error::InvalidArgument(format!(
                "GAN needs {ENCODER_STAGES} encoder widths and {DISCRIMINATOR_STAGES} discriminator widths"
            )));
        }
        if self.encoder_widths.contains(&0) || self.discriminator_widths.contains(&0) {
            return Err(Error::InvalidArgument("GAN widths must be positive".into()));
        }
        if self.padded_rows == 0
            || !self.padded_rows.is_multiple_of(ROW_MULTIPLE)
            || self.padded_cols == 0
            || !self.padded_cols.is_multiple_of(COL_MULTIPLE)
        {
            return Err(Error::InvalidArgument(format!(
                "padded shape {}x{} must be a multiple of {ROW_MULTIPLE}x{COL_MULTIPLE}",
                self.padded_rows, self.padded_cols
            )));
        }
        Ok(())
    }

    /// Window of encoder `i` (1-based); decoder `8 - i` uses the same one.
    pub fn encoder_window(i: usize) -> Window {
        if i <= SQUARE_STAGES {
            Window::new((4, 4), (2, 2), (1, 1))
        } else {
            Window::new((4, 3), (2, 1), (1, 1))
        }
    }

    fn discriminator_window(i: usize) -> Window {
        match i {
            1 | 2 => Window::new((4, 4), (2, 2), (1, 1)),
            3 => Window::new((4, 3), (2, 1), (1, 1)),
            _ => Window::same(3),
        }
    }
}

fn retag<T: Real>(mut layer: Layer<T>, tag: &str) -> Layer<T> {
    for p in layer.params_mut() {
        p.tag = tag.to_string();
    }
    for b in layer.buffers_mut() {
        b.tag = tag.to_string();
    }
    layer
}

fn lrelu<T: Real>() -> Layer<T> {
    Layer::act(ActivationKind::LeakyRelu)
}

fn conv_block<T: Real>(tag: &str, conv: Layer<T>, out_c: usize, bn: bool, act: bool) -> Sequential<T> {
    let mut layers = vec![retag(conv, tag)];
    if bn {
        layers.push(retag(Layer::BatchNorm(BatchNorm2d::new(&format!("{tag}.bn"), out_c)), tag));
    }
    if act {
        layers.push(lrelu());
    }
    Sequential::new(layers)
}

fn init_normal<T: Real>(net: &mut Sequential<T>, rng: &mut impl rand::Rng) {
    for l in &mut net.layers {
        match l {
            Layer::Conv(c) => init::normal(&mut c.weight, 0.0, INIT_STD, rng),
            Layer::ConvTranspose(c) => init::normal(&mut c.weight, 0.0, INIT_STD, rng),
            _ => {}
        }
    }
}

#[derive(Debug, Clone)]
pub struct Generator<T> {
    pub encoders: Vec<Sequential<T>>,
    pub bottleneck: Sequential<T>,
    pub decoders: Vec<Sequential<T>>,
    rows: usize,
    cols: usize,
}

impl<T: Real> Generator<T> {
    fn new(spec: &GanSpec, rng: &mut impl rand::Rng) -> Self {
        let w = &spec.encoder_widths;
        let n = ENCODER_STAGES;
        let mut encoders = Vec::with_capacity(n);
        for i in 1..=n {
            let in_c = if i == 1 { 1 } else { w[i - 2] };
            let name = format!("{}.conv", encoder_tag(i));
            let conv = Layer::Conv(Conv2d::new(&name, in_c, w[i - 1], GanSpec::encoder_window(i)));
            let bn = i > 1 && i < n;
            encoders.push(conv_block(&encoder_tag(i), conv, w[i - 1], bn, true));
        }
        let bottle = Layer::Conv(Conv2d::new(&format!("{BOTTLENECK_TAG}.conv"), w[n - 1], w[n - 1], Window::same(3)));
        let bottleneck = conv_block(BOTTLENECK_TAG, bottle, w[n - 1], false, true);
        let mut decoders = Vec::with_capacity(n);
        let mut prev = w[n - 1];
        for j in 1..=n {
            let skip = w[n - j];
            let out_c = if j == n { 1 } else { w[n - j - 1] };
            let name = format!("{}.conv", decoder_tag(j));
            let conv = Layer::ConvTranspose(ConvTranspose2d::new(&name, prev + skip, out_c, GanSpec::encoder_window(n + 1 - j)));
            let last = j == n;
            decoders.push(conv_block(&decoder_tag(j), conv, out_c, !last, !last));
            prev = out_c;
        }
        let mut g = Self {
            encoders,
            bottleneck,
            decoders,
            rows: spec.padded_rows,
            cols: spec.padded_cols,
        };
        for s in g.stages_mut() {
            init_normal(s, rng);
        }
        g
    }

    fn stages(&self) -> impl Iterator<Item = &Sequential<T>> {
        self.encoders.iter().chain(std::iter::once(&self.bottleneck)).chain(&self.decoders)
    }

    fn stages_mut(&mut self) -> impl Iterator<Item = &mut Sequential<T>> {
        self.encoders
            .iter_mut()
            .chain(std::iter::once(&mut self.bottleneck))
            .chain(&mut self.decoders)
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let [_, c, h, w] = x.shape();
        if c != 1 || h != self.rows || w != self.cols {
            return Err(Error::InvalidArgument(format!(
                "generator expects padded 1x{}x{} input, got {c}x{h}x{w}",
                self.rows, self.cols
            )));
        }
        let mut skips = Vec::with_capacity(ENCODER_STAGES);
        let mut cur = x.clone();
        for e in &mut self.encoders {
            cur = e.forward(&cur, mode)?;
            skips.push(cur.clone());
        }
        cur = self.bottleneck.forward(&cur, mode)?;
        for d in &mut self.decoders {
            let skip = skips.pop().expect("one skip per decoder");
            cur = d.forward(&Tensor::concat_channels(&cur, &skip)?, mode)?;
        }
        Ok(cur)
    }

    /// Accumulates gradients of trainable parameters. Stages in front of the
    /// first trainable one are skipped.
    pub fn backward(&mut self, grad: &Tensor<T>) -> Result<()> {
        let n = ENCODER_STAGES;
        let trainable: Vec<bool> = self.stages().map(|s| s.has_trainable()).collect();
        let Some(first) = trainable.iter().position(|&t| t) else {
            return Ok(());
        };
        // Stage index: encoders 0..n, bottleneck n, decoders n+1..=2n.
        let mut skip_grads: Vec<Option<Tensor<T>>> = vec![None; n];
        let mut cur = grad.clone();
        for j in (1..=n).rev() {
            let stage = n + j;
            if stage < first {
                return Ok(());
            }
            let d = &mut self.decoders[j - 1];
            let Some(g) = d.backward(&cur, stage > first)? else {
                return Ok(());
            };
            let prev_c = match j {
                1 => self.bottleneck_out_channels(),
                _ => self.decoder_out_channels(j - 1),
            };
            let (gp, gs) = g.split_channels(prev_c)?;
            skip_grads[n - j] = Some(gs);
            cur = gp;
        }
        let Some(mut cur) = self.bottleneck.backward(&cur, n > first)? else {
            return Ok(());
        };
        for i in (1..=n).rev() {
            let stage = i - 1;
            if stage < first {
                break;
            }
            if let Some(s) = skip_grads[i - 1].take() {
                cur.add_assign(&s)?;
            }
            match self.encoders[i - 1].backward(&cur, stage > first)? {
                Some(g) => cur = g,
                None => break,
            }
        }
        Ok(())
    }

    fn bottleneck_out_channels(&self) -> usize {
        out_channels(&self.bottleneck)
    }

    fn decoder_out_channels(&self, j: usize) -> usize {
        out_channels(&self.decoders[j - 1])
    }
}

fn out_channels<T: Real>(s: &Sequential<T>) -> usize {
    match &s.layers[0] {
        Layer::Conv(c) => c.out_channels(),
        Layer::ConvTranspose(c) => c.out_channels(),
        _ => unreachable!("blocks start with a convolution"),
    }
}

/// Patch discriminator over `(input, candidate)` channel pairs; returns logits.
#[derive(Debug, Clone)]
pub struct Discriminator<T> {
    pub net: Sequential<T>,
}

impl<T: Real> Discriminator<T> {
    fn new(spec: &GanSpec, rng: &mut impl rand::Rng) -> Self {
        let w = &spec.discriminator_widths;
        let mut layers = Vec::new();
        for i in 1..=DISCRIMINATOR_STAGES {
            let in_c = if i == 1 { 2 } else { w[i - 2] };
            let name = format!("{}.conv", disc_tag(i));
            let conv = Layer::Conv(Conv2d::new(&name, in_c, w[i - 1], GanSpec::discriminator_window(i)));
            let last = i == DISCRIMINATOR_STAGES;
            let block = conv_block(&disc_tag(i), conv, w[i - 1], (2..=4).contains(&i), !last);
            layers.extend(block.layers);
        }
        let mut net = Sequential::new(layers);
        init_normal(&mut net, rng);
        Self { net }
    }

    pub fn forward(&mut self, input: &Tensor<T>, candidate: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        self.net.forward(&Tensor::concat_channels(input, candidate)?, mode)
    }

    /// Returns the gradient w.r.t. the candidate channel.
    pub fn backward(&mut self, grad: &Tensor<T>, need_candidate_grad: bool) -> Result<Option<Tensor<T>>> {
        match self.net.backward(grad, need_candidate_grad)? {
            Some(g) => Ok(Some(g.split_channels(1)?.1)),
            None => Ok(None),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Gan<T> {
    pub spec: GanSpec,
    pub generator: Generator<T>,
    pub discriminator: Discriminator<T>,
    pub gen_optimizer: Adam,
    pub disc_optimizer: Adam,
}

impl<T: Real> Gan<T> {
    pub fn new(spec: GanSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = rng::stream(seed, purpose::INIT, 1);
        let generator = Generator::new(&spec, &mut rng);
        let discriminator = Discriminator::new(&spec, &mut rng);
        Ok(Self {
            spec,
            generator,
            discriminator,
            gen_optimizer: Adam::new(2e-4, 0.5, 0.999),
            disc_optimizer: Adam::new(2e-4, 0.5, 0.999),
        })
    }

    /// Zero-pads `[n, 1, rows, cols]` planes to the generator shape.
    pub fn pad(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (h, w) = x.spatial();
        if h > self.spec.padded_rows || w > self.spec.padded_cols {
            return Err(Error::InvalidArgument(format!(
                "{h}x{w} plane exceeds the padded shape {}x{}",
                self.spec.padded_rows, self.spec.padded_cols
            )));
        }
        Ok(x.resize_spatial(self.spec.padded_rows, self.spec.padded_cols))
    }

    pub fn crop(&self, x: &Tensor<T>, rows: usize, cols: usize) -> Tensor<T> {
        x.resize_spatial(rows, cols)
    }

    pub fn generator_params(&self) -> Vec<&Param<T>> {
        self.generator.stages().flat_map(|s| s.params()).collect()
    }

    pub fn discriminator_params(&self) -> Vec<&Param<T>> {
        self.discriminator.net.params()
    }

    pub fn gen_step(&mut self) {
        let params = self.generator.stages_mut().flat_map(|s| s.params_mut());
        self.gen_optimizer.step(params);
    }

    pub fn disc_step(&mut self) {
        self.disc_optimizer.step(self.discriminator.net.params_mut());
    }

    /// Clears Adam moments and step counts of both networks.
    pub fn reset_optimizers(&mut self) {
        self.gen_optimizer.reset(self.generator.stages_mut().flat_map(|s| s.params_mut()));
        self.disc_optimizer.reset(self.discriminator.net.params_mut());
    }

    pub fn zero_disc_grad(&mut self) {
        self.discriminator.net.params_mut().into_iter().for_each(Param::zero_grad);
    }

    pub fn zero_gen_grad(&mut self) {
        self.generator
            .stages_mut()
            .flat_map(|s| s.params_mut())
            .for_each(Param::zero_grad);
    }
}

impl<T: Real> Network<T> for Gan<T> {
    fn params(&self) -> Vec<&Param<T>> {
        let mut v = self.generator_params();
        v.extend(self.discriminator_params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v: Vec<&mut Param<T>> = self.generator.stages_mut().flat_map(|s| s.params_mut()).collect();
        v.extend(self.discriminator.net.params_mut());
        v
    }

    fn buffers(&self) -> Vec<&Buffer<T>> {
        let mut v: Vec<&Buffer<T>> = self.generator.stages().flat_map(|s| s.buffers()).collect();
        v.extend(self.discriminator.net.buffers());
        v
    }

    fn buffers_mut(&mut self) -> Vec<&mut Buffer<T>> {
        let mut v: Vec<&mut Buffer<T>> = self.generator.stages_mut().flat_map(|s| s.buffers_mut()).collect();
        v.extend(self.discriminator.net.buffers_mut());
        v
    }
}
