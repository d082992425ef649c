//! End-to-end channel-estimation experiments across two channel domains.
//!
//! A run generates a quasi-static source dataset and a ray-traced target
//! dataset, trains CNN/GAN refiners on the source, fine-tunes them on a
//! small target split with early layers frozen, and sweeps NMSE over SNR.
//! Every random draw is keyed by the config seeds, so reruns are
//! byte-identical.

pub mod config;
pub mod dataset;
pub mod error;
pub mod histogram;
pub mod link;
pub mod pipeline;

pub use config::{Domain, ExperimentConfig, Method, Split};
pub use dataset::{generate_dataset, Dataset};
pub use error::{Error, Result};
pub use histogram::{histogram_magnitudes, Histogram};
pub use link::{run_link, LinkContext, LinkOutput};
pub use pipeline::{evaluate_sweep, finetune_target, run_experiment, train_source, Evaluation, ResultRow};
