use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chanest_neural::cnn::{block_tag, Cnn};
use chanest_neural::gan::{disc_tag, encoder_tag, Gan};
use chanest_neural::train::{train_cnn, train_gan, GanLosses, PairSource, TrainConfig};
use chanest_neural::{Network, Real};

use crate::error::{Error, Result};

/// CNN blocks that stay trainable during transfer.
const CNN_TRAINABLE_BLOCKS: [usize; 2] = [5, 6];
const GAN_FROZEN_ENCODERS: usize = 5;
const GAN_FROZEN_DISC_CONVS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransferKind {
    Cnn,
    Gan,
}

impl FromStr for TransferKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cnn" => Ok(TransferKind::Cnn),
            "gan" => Ok(TransferKind::Gan),
            other => Err(Error::InvalidArgument(format!("unknown model kind {other:?}"))),
        }
    }
}

impl fmt::Display for TransferKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TransferKind::Cnn => "cnn",
            TransferKind::Gan => "gan",
        })
    }
}

impl TransferKind {
    /// Whether a parameter with layer `tag` stays trainable.
    pub fn is_trainable(self, tag: &str) -> bool {
        match self {
            TransferKind::Cnn => CNN_TRAINABLE_BLOCKS.iter().any(|&i| tag == block_tag(i)),
            TransferKind::Gan => {
                let frozen_enc = (1..=GAN_FROZEN_ENCODERS).any(|i| tag == encoder_tag(i));
                let frozen_disc = (1..=GAN_FROZEN_DISC_CONVS).any(|i| tag == disc_tag(i));
                !(frozen_enc || frozen_disc)
            }
        }
    }
}

/// Trainability flag for every named parameter of one model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FreezeMask {
    pub flags: BTreeMap<String, bool>,
}

impl FreezeMask {
    pub fn all_trainable<T: Real>(model: &impl Network<T>) -> Self {
        Self {
            flags: model.params().iter().map(|p| (p.name.clone(), true)).collect(),
        }
    }

    pub fn is_trainable(&self, name: &str) -> Option<bool> {
        self.flags.get(name).copied()
    }

    /// Copies the flags onto `model`. The mask must name exactly the model's
    /// parameters.
    pub fn apply<T: Real>(&self, model: &mut impl Network<T>) -> Result<()> {
        let names: Vec<String> = model.params().iter().map(|p| p.name.clone()).collect();
        if names.len() != self.flags.len() || names.iter().any(|n| !self.flags.contains_key(n)) {
            return Err(Error::InvalidArgument("freeze mask does not match the model's parameters".into()));
        }
        for p in model.params_mut() {
            p.trainable = self.flags[&p.name];
        }
        Ok(())
    }

    pub fn trainable_count<T: Real>(&self, model: &impl Network<T>) -> usize {
        model
            .params()
            .iter()
            .filter(|p| self.flags.get(&p.name) == Some(&true))
            .map(|p| p.numel())
            .sum()
    }

    /// Order-sensitive checksum over the bit patterns of all frozen values.
    pub fn frozen_checksum<T: Real>(&self, model: &impl Network<T>) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for p in model.params().iter().filter(|p| self.flags.get(&p.name) == Some(&false)) {
            for v in p.value.data() {
                for b in v.f64().to_bits().to_le_bytes() {
                    h = (h ^ b as u64).wrapping_mul(0x100_0000_01b3);
                }
            }
        }
        h
    }
}

pub fn freeze_for_transfer<T: Real>(kind: TransferKind, model: &impl Network<T>) -> FreezeMask {
    FreezeMask {
        flags: model.params().iter().map(|p| (p.name.clone(), kind.is_trainable(&p.tag))).collect(),
    }
}

/// Applies `mask`, restarts Adam and trains on target pairs.
pub fn finetune_cnn<T: Real>(
    model: &mut Cnn<T>,
    data: &mut dyn PairSource,
    cfg: &TrainConfig,
    mask: &FreezeMask,
) -> Result<Vec<f64>> {
    mask.apply(model)?;
    model.reset_optimizer();
    Ok(train_cnn(model, data, cfg)?)
}

pub fn finetune_gan<T: Real>(
    model: &mut Gan<T>,
    data: &mut dyn PairSource,
    cfg: &TrainConfig,
    mask: &FreezeMask,
) -> Result<Vec<GanLosses>> {
    mask.apply(model)?;
    model.reset_optimizers();
    Ok(train_gan(model, data, cfg)?)
}
