//! Generator/discriminator pairs for the forget and retain sets.

mod kl;

pub use kl::{estimate_kl, DEFAULT_KL_BINS, DEFAULT_KL_EPSILON};

use std::fmt::Write as _;

use log::debug;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, SplitTag};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::{
    init_network, loss_and_gradients, sgd_step, GeneratorLoss, HiddenActivation, Network,
    Objective, OptimizerState, OutputActivation,
};
use crate::rng::{derive_seed, permutation, seeded, Rng as SeededRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GanSource {
    Forget,
    Retain,
}

impl GanSource {
    pub fn as_str(self) -> &'static str {
        match self {
            GanSource::Forget => "forget",
            GanSource::Retain => "retain",
        }
    }

    pub fn synthetic_tag(self) -> SplitTag {
        match self {
            GanSource::Forget => SplitTag::SyntheticForget,
            GanSource::Retain => SplitTag::SyntheticRetain,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GanConfig {
    pub noise_dim: usize,
    /// Full generator layer list, `noise_dim` first and data dim last.
    pub generator_dims: Vec<usize>,
    /// Full discriminator layer list, data dim first and `1` last.
    pub discriminator_dims: Vec<usize>,
    pub hidden_activation: HiddenActivation,
    pub epochs: usize,
    pub batch_size: usize,
    pub disc_steps_per_gen_step: usize,
    pub generator_lr: f64,
    pub discriminator_lr: f64,
    pub momentum: f64,
    pub loss_variant: GeneratorLoss,
    pub kl_bins: usize,
    pub kl_epsilon: f64,
    pub seed: u64,
}

impl GanConfig {
    /// Default shapes for `data_dim`-dimensional data: one hidden layer of 32
    /// units in each network and an 8-dimensional noise prior. Momentum 0.9
    /// at this learning rate makes the minimax game oscillate, hence 0.5.
    pub fn for_dim(data_dim: usize) -> Self {
        let noise_dim = 8;
        Self {
            noise_dim,
            generator_dims: vec![noise_dim, 32, data_dim],
            discriminator_dims: vec![data_dim, 32, 1],
            hidden_activation: HiddenActivation::Relu,
            epochs: 100,
            batch_size: 16,
            disc_steps_per_gen_step: 1,
            generator_lr: 0.01,
            discriminator_lr: 0.01,
            momentum: 0.5,
            loss_variant: GeneratorLoss::Minimax,
            kl_bins: DEFAULT_KL_BINS,
            kl_epsilon: DEFAULT_KL_EPSILON,
            seed: 0,
        }
    }

    pub fn validate(&self, data_dim: usize) -> Result<()> {
        let g = &self.generator_dims;
        let d = &self.discriminator_dims;
        if self.noise_dim == 0 {
            return Err(Error::config("noise_dim must be >= 1"));
        }
        if g.len() < 2 || g[0] != self.noise_dim || g[g.len() - 1] != data_dim {
            return Err(Error::config(format!(
                "generator_dims {g:?} must start at noise_dim {} and end at data dim {data_dim}",
                self.noise_dim
            )));
        }
        if d.len() < 2 || d[0] != data_dim || d[d.len() - 1] != 1 {
            return Err(Error::config(format!(
                "discriminator_dims {d:?} must start at data dim {data_dim} and end at 1"
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 || self.disc_steps_per_gen_step == 0 {
            return Err(Error::config(
                "epochs, batch_size and disc_steps_per_gen_step must be >= 1",
            ));
        }
        if self.kl_bins == 0 {
            return Err(Error::config("kl_bins must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KlPoint {
    pub epoch: usize,
    pub kl: f64,
}

#[derive(Debug, Clone)]
pub struct GanPair {
    pub generator: Network,
    pub discriminator: Network,
    pub kl_trace: Vec<KlPoint>,
    pub source: GanSource,
}

impl GanPair {
    pub fn bit_identical(&self, other: &GanPair) -> bool {
        self.source == other.source
            && self.generator.bit_identical(&other.generator)
            && self.discriminator.bit_identical(&other.discriminator)
            && self.kl_trace.len() == other.kl_trace.len()
            && self
                .kl_trace
                .iter()
                .zip(&other.kl_trace)
                .all(|(a, b)| a.epoch == b.epoch && a.kl.to_bits() == b.kl.to_bits())
    }
}

fn gaussian_noise(rng: &mut SeededRng, n: usize, k: usize) -> Matrix {
    let data = (0..n * k).map(|_| rng.sample(StandardNormal)).collect();
    Matrix::from_vec(n, k, data).expect("n*k values")
}

/// Trains one GAN on the rows of `real`. Each real mini-batch drives one
/// discriminator step (real rows labelled 1, generated rows 0); after every
/// `disc_steps_per_gen_step` of those, the generator takes one step through
/// the frozen discriminator. The KL trace gets one entry per epoch, measured
/// on a fresh sample as large as `real`.
pub fn train_gan(real: &Dataset, cfg: &GanConfig, source: GanSource) -> Result<GanPair> {
    let d = real.dim();
    cfg.validate(d)?;
    let n = real.len();
    if n < cfg.batch_size {
        return Err(Error::config(format!(
            "{n} real rows cannot fill a batch of {}",
            cfg.batch_size
        )));
    }
    let mut gen = init_network(
        &cfg.generator_dims,
        cfg.hidden_activation,
        OutputActivation::Identity,
        derive_seed(cfg.seed, "generator"),
    )?;
    let mut disc = init_network(
        &cfg.discriminator_dims,
        cfg.hidden_activation,
        OutputActivation::Sigmoid,
        derive_seed(cfg.seed, "discriminator"),
    )?;
    let mut gen_opt = OptimizerState::new(&gen, cfg.generator_lr, cfg.momentum)?;
    let mut disc_opt = OptimizerState::new(&disc, cfg.discriminator_lr, cfg.momentum)?;
    let mut rng = seeded(derive_seed(cfg.seed, "training"));
    let features = real.features();
    let ones = vec![1.0; cfg.batch_size];
    let zeros = vec![0.0; cfg.batch_size];
    let mut kl_trace = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        let order = permutation(n, &mut rng);
        let mut disc_steps = 0usize;
        let mut last_losses = (0.0, 0.0);
        for (step, chunk) in order.chunks(cfg.batch_size).enumerate() {
            if chunk.len() < cfg.batch_size {
                break;
            }
            let wrap = |e: Error| match e {
                Error::Numeric(m) => Error::numeric(format!(
                    "{} GAN, epoch {epoch}, step {step}: {m}",
                    source.as_str()
                )),
                other => other,
            };

            let real_batch = features.select_rows(chunk);
            let fake = gen.forward(&gaussian_noise(&mut rng, cfg.batch_size, cfg.noise_dim))?;
            let (real_loss, mut d_grads) =
                loss_and_gradients(&disc, &real_batch, Objective::Bce { targets: &ones })
                    .map_err(wrap)?;
            let (fake_loss, fake_grads) =
                loss_and_gradients(&disc, &fake, Objective::Bce { targets: &zeros })
                    .map_err(wrap)?;
            d_grads.add_assign(&fake_grads)?;
            sgd_step(&mut disc, &d_grads, &mut disc_opt).map_err(wrap)?;
            disc_steps += 1;
            last_losses.0 = real_loss + fake_loss;

            if disc_steps.is_multiple_of(cfg.disc_steps_per_gen_step) {
                let z = gaussian_noise(&mut rng, cfg.batch_size, cfg.noise_dim);
                let objective = Objective::ThroughFrozenDiscriminator {
                    discriminator: &disc,
                    loss: cfg.loss_variant,
                };
                let (g_loss, g_grads) = loss_and_gradients(&gen, &z, objective).map_err(wrap)?;
                sgd_step(&mut gen, &g_grads, &mut gen_opt).map_err(wrap)?;
                last_losses.1 = g_loss;
            }
        }
        let synth = gen.forward(&gaussian_noise(&mut rng, n, cfg.noise_dim))?;
        if !synth.all_finite() {
            return Err(Error::numeric(format!(
                "{} GAN produced non-finite samples after epoch {epoch}",
                source.as_str()
            )));
        }
        let kl = estimate_kl(features, &synth, cfg.kl_bins, cfg.kl_epsilon)?;
        debug!(
            "{} GAN epoch {epoch}: d_loss {:.4} g_loss {:.4} kl {kl:.4}",
            source.as_str(),
            last_losses.0,
            last_losses.1
        );
        kl_trace.push(KlPoint { epoch, kl });
    }

    Ok(GanPair {
        generator: gen,
        discriminator: disc,
        kl_trace,
        source,
    })
}

/// Draws `n` unlabelled rows `G(z)` with `z ~ N(0, I)`.
pub fn sample_synthetic(
    gen: &Network,
    n: usize,
    num_classes: usize,
    tag: SplitTag,
    seed: u64,
) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::config("synthetic sample size must be >= 1"));
    }
    let mut rng = seeded(seed);
    let z = gaussian_noise(&mut rng, n, gen.input_dim());
    let features = gen.forward(&z)?;
    if !features.all_finite() {
        return Err(Error::numeric("generator produced non-finite samples"));
    }
    Dataset::new(features, None, num_classes, tag, seed)
}

/// `epoch,kl` CSV, one row per epoch.
pub fn kl_trace_csv(trace: &[KlPoint]) -> String {
    let mut out = String::from("epoch,kl\n");
    for p in trace {
        writeln!(out, "{},{}", p.epoch, p.kl).expect("write to string");
    }
    out
}

pub fn parse_kl_csv(text: &str) -> Result<Vec<KlPoint>> {
    let mut lines = text.lines();
    if lines.next() != Some("epoch,kl") {
        return Err(Error::Format {
            offset: 0,
            message: "KL trace must start with the header `epoch,kl`".into(),
        });
    }
    let mut offset = "epoch,kl\n".len();
    let mut out = Vec::new();
    for line in lines {
        let bad = || Error::Format {
            offset,
            message: format!("malformed KL row `{line}`"),
        };
        let (e, k) = line.split_once(',').ok_or_else(bad)?;
        out.push(KlPoint {
            epoch: e.parse().map_err(|_| bad())?,
            kl: k.parse().map_err(|_| bad())?,
        });
        offset += line.len() + 1;
    }
    Ok(out)
}
