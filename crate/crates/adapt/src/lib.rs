//! Transfer learning across channel domains.
//!
//! [`freeze_for_transfer`] builds the per-parameter trainability mask used
//! when adapting a source-domain model, [`finetune_cnn`] and
//! [`finetune_gan`] retrain only the unfrozen part, and [`sinkhorn_w1`]
//! measures how far apart two sets of channel matrices are.

mod error;
mod freeze;
mod ot;

pub use error::{Error, Result};
pub use freeze::{finetune_cnn, finetune_gan, freeze_for_transfer, FreezeMask, TransferKind};
pub use ot::{cost_matrix, frobenius_norm, sinkhorn_w1, OtProblem, SinkhornResult};
