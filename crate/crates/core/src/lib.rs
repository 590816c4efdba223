//! Machine unlearning through label inversion and GAN-synthesized data.
//!
//! The crate is organised bottom-up:
//!
//! - [`nn`]: deterministic feedforward networks, losses, backprop, momentum SGD.
//! - [`data`]: Gaussian-mixture generation, train/test/forget/retain splits,
//!   label inversion, and dataset files.
//! - [`gan`]: generator/discriminator training with a per-epoch KL trace.
//! - [`unlearn`]: pre-training, synthetic labeling, combined-set construction,
//!   alternating forget/retain fine-tuning, and the two baselines.
//! - [`eval`]: accuracy, per-sample losses, loss-based membership inference.
//! - [`experiment`]: config-driven pipeline runner with a hashed manifest.

pub mod codec;
pub mod data;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod gan;
pub mod io;
pub mod linalg;
pub mod nn;
pub mod rng;
pub mod unlearn;

pub use error::{Error, Result};
pub use linalg::Matrix;
