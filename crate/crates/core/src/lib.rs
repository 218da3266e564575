//! Decoupled density-aware training for class-imbalanced tabular classification.
//!
//! The crate is organized bottom-up:
//!
//! - [`data`]: datasets, CSV ingestion, preprocessing, stratified splits and a
//!   synthetic generator with a dense majority and a multi-modal minority.
//! - [`sampling`]: density-exponent class sampling and paired regular/balanced batches.
//! - [`nn`]: a small residual MLP with two classifier heads, exact reverse-mode
//!   gradients, optimizers and a finite-difference checker.
//! - [`losses`]: cross-entropy, focal, density-aware hinge (hinge and softmax forms)
//!   and the trainable cost-matrix loss.
//! - [`metrics`]: AUC-ROC, AUC-PRC, Brier / Brier skill score, calibration bins,
//!   macro/micro AUC and temperature scaling.
//! - [`training`]: the decoupled training loop, ablation variants, θ sweep.
//! - [`experiment`]: config files, checkpoints and the end-to-end commands used by the CLI.

pub mod data;
pub mod error;
pub mod experiment;
pub mod losses;
mod math;
pub mod metrics;
pub mod nn;
pub mod sampling;
pub mod training;

pub use data::{Dataset, NormStats, SynthConfig};
pub use error::{Error, Result};
pub use losses::{CostParams, DahConfig, FocalConfig};
pub use metrics::{CalibrationTable, MetricsReport, ScoredSet};
pub use nn::{Gradients, HeadMask, ModelParams, OptState};
pub use sampling::{BatchPair, SamplerConfig, SamplerState};
pub use training::{TrainConfig, TrainHistory, Variant};
