//! The unlearning procedure proper and its two baselines.
//!
//! The pre-trained classifier labels the synthetic samples, forget labels are
//! inverted, and a copy of the classifier is fine-tuned alternately on the
//! combined forget set (inverted labels) and the combined retain set (true
//! labels), forget pass first in every epoch.

use std::fmt::Write as _;

use log::debug;
use serde::{Deserialize, Serialize};

use crate::data::{invert_labels, Dataset, InversionMode, SplitTag};
use crate::error::{Error, Result};
use crate::nn::{
    init_network, loss_and_gradients, predict_labels, sgd_step, HiddenActivation, Network,
    Objective, OptimizerState, OutputActivation,
};
use crate::rng::{derive_seed, permutation, seeded, Rng};

/// Architecture and optimisation settings for the classifier being unlearned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainConfig {
    pub hidden_dims: Vec<usize>,
    pub hidden_activation: HiddenActivation,
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            hidden_dims: vec![128],
            hidden_activation: HiddenActivation::Relu,
            epochs: 200,
            learning_rate: 0.05,
            momentum: 0.9,
            batch_size: 32,
            seed: 0,
        }
    }
}

impl PretrainConfig {
    pub fn layer_dims(&self, input_dim: usize, num_classes: usize) -> Vec<usize> {
        std::iter::once(input_dim)
            .chain(self.hidden_dims.iter().copied())
            .chain(std::iter::once(num_classes))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnlearnPlan {
    pub inversion_mode: InversionMode,
    /// Synthetic rows per original row, for both the forget and retain sets.
    pub synthetic_ratio: f64,
    pub finetune_epochs: usize,
    pub forget_lr: f64,
    pub retain_lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    /// When false only the synthetic forget labels are inverted (ablation).
    pub invert_original_forget: bool,
    pub seed: u64,
}

impl Default for UnlearnPlan {
    fn default() -> Self {
        Self {
            inversion_mode: InversionMode::Complement,
            synthetic_ratio: 1.0,
            finetune_epochs: 5,
            forget_lr: 0.01,
            retain_lr: 0.01,
            momentum: 0.9,
            batch_size: 32,
            invert_original_forget: true,
            seed: 0,
        }
    }
}

impl UnlearnPlan {
    pub fn validate(&self) -> Result<()> {
        if !(self.synthetic_ratio >= 0.0 && self.synthetic_ratio.is_finite()) {
            return Err(Error::config(format!(
                "synthetic_ratio must be >= 0, got {}",
                self.synthetic_ratio
            )));
        }
        if !(self.forget_lr > 0.0 && self.retain_lr > 0.0) {
            return Err(Error::config("forget_lr and retain_lr must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be >= 1"));
        }
        Ok(())
    }

    /// Number of synthetic rows to draw for a set of `n` original rows.
    pub fn synthetic_count(&self, n: usize) -> usize {
        (self.synthetic_ratio * n as f64).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CombinedSets {
    /// Original and synthetic forget rows with inverted labels.
    pub forget_combined: Dataset,
    /// Original and synthetic retain rows with their (true or classifier) labels.
    pub retain_combined: Dataset,
    /// Labels of `forget_combined` before inversion, row-aligned.
    pub forget_source_labels: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Forget,
    Retain,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Forget => "forget",
            Phase::Retain => "retain",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseEntry {
    pub epoch: usize,
    pub phase: Phase,
    pub mean_loss: f64,
}

/// Ordered record of every fine-tuning pass.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PhaseLog {
    pub entries: Vec<PhaseEntry>,
}

impl PhaseLog {
    /// `epoch,phase,mean_loss` CSV.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,phase,mean_loss\n");
        for e in &self.entries {
            writeln!(out, "{},{},{}", e.epoch, e.phase.as_str(), e.mean_loss)
                .expect("write to string");
        }
        out
    }
}

/// One shuffled pass of mini-batch SGD with cross-entropy. Returns the mean
/// of the batch losses.
fn sgd_pass(
    net: &mut Network,
    opt: &mut OptimizerState,
    ds: &Dataset,
    batch_size: usize,
    rng: &mut Rng,
) -> Result<f64> {
    let labels = ds.labels()?;
    let order = permutation(ds.len(), rng);
    let mut total = 0.0;
    let mut batches = 0usize;
    for chunk in order.chunks(batch_size) {
        let x = ds.features().select_rows(chunk);
        let y: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
        let (loss, grads) = loss_and_gradients(net, &x, Objective::CrossEntropy { labels: &y })?;
        sgd_step(net, &grads, opt)?;
        total += loss;
        batches += 1;
    }
    Ok(if batches == 0 {
        0.0
    } else {
        total / batches as f64
    })
}

fn check_classifier(net: &Network, ds: &Dataset) -> Result<()> {
    if net.input_dim() != ds.dim() {
        return Err(Error::shape(format!(
            "classifier expects {} features, {:?} set has {}",
            net.input_dim(),
            ds.split_tag(),
            ds.dim()
        )));
    }
    if net.output_dim() != ds.num_classes() {
        return Err(Error::config(format!(
            "classifier has {} outputs, {:?} set has {} classes",
            net.output_dim(),
            ds.split_tag(),
            ds.num_classes()
        )));
    }
    Ok(())
}

/// Trains the classifier `M` from scratch with mini-batch momentum SGD.
/// With zero epochs this is exactly the freshly initialised network.
pub fn pretrain_model(train: &Dataset, cfg: &PretrainConfig) -> Result<Network> {
    if train.is_empty() {
        return Err(Error::config("cannot pre-train on an empty training set"));
    }
    if cfg.batch_size == 0 {
        return Err(Error::config("batch_size must be >= 1"));
    }
    let dims = cfg.layer_dims(train.dim(), train.num_classes());
    let mut net = init_network(
        &dims,
        cfg.hidden_activation,
        OutputActivation::Softmax,
        derive_seed(cfg.seed, "init"),
    )?;
    let mut opt = OptimizerState::new(&net, cfg.learning_rate, cfg.momentum)?;
    let mut rng = seeded(derive_seed(cfg.seed, "batches"));
    for epoch in 1..=cfg.epochs {
        let loss =
            sgd_pass(&mut net, &mut opt, train, cfg.batch_size, &mut rng).map_err(|e| match e {
                Error::Numeric(m) => Error::numeric(format!("pre-training epoch {epoch}: {m}")),
                other => other,
            })?;
        if epoch % 50 == 0 || epoch == cfg.epochs {
            debug!("pre-training epoch {epoch}: mean loss {loss:.5}");
        }
    }
    Ok(net)
}

/// Attaches `M`'s predicted labels to an unlabelled synthetic set.
pub fn label_synthetic(model: &Network, synth: &Dataset) -> Result<Dataset> {
    if synth.is_labeled() {
        return Err(Error::Label(format!(
            "{:?} set is already labelled",
            synth.split_tag()
        )));
    }
    check_classifier(model, synth)?;
    let labels = predict_labels(model, synth.features())?;
    synth.with_labels(labels)
}

/// Builds `F ∪ D_sf` with inverted labels and `R ∪ D_sr` with labels kept,
/// each shuffled deterministically by `plan.seed`.
pub fn build_combined_sets(
    forget: &Dataset,
    retain: &Dataset,
    synth_forget: Option<&Dataset>,
    synth_retain: Option<&Dataset>,
    model: &Network,
    plan: &UnlearnPlan,
) -> Result<CombinedSets> {
    plan.validate()?;
    let classes = forget.num_classes();
    for ds in [Some(retain), synth_forget, synth_retain]
        .into_iter()
        .flatten()
    {
        if ds.num_classes() != classes {
            return Err(Error::config(format!(
                "{:?} set has {} classes, forget set has {classes}",
                ds.split_tag(),
                ds.num_classes()
            )));
        }
    }
    check_classifier(model, forget)?;

    let forget_all = match synth_forget {
        Some(s) => forget.concat(s, SplitTag::Forget)?,
        None => forget.clone(),
    };
    let retain_all = match synth_retain {
        Some(s) => retain.concat(s, SplitTag::Retain)?,
        None => retain.clone(),
    };
    let source = forget_all.labels()?.to_vec();
    let inverted = invert_labels(
        &source,
        classes,
        plan.inversion_mode,
        derive_seed(plan.seed, "invert"),
    )?;
    let new_labels: Vec<usize> = if plan.invert_original_forget {
        inverted
    } else {
        source[..forget.len()]
            .iter()
            .chain(&inverted[forget.len()..])
            .copied()
            .collect()
    };
    let forget_all = forget_all.with_labels(new_labels)?;

    let f_order = permutation(
        forget_all.len(),
        &mut seeded(derive_seed(plan.seed, "shuffle_forget")),
    );
    let r_order = permutation(
        retain_all.len(),
        &mut seeded(derive_seed(plan.seed, "shuffle_retain")),
    );
    Ok(CombinedSets {
        forget_combined: forget_all.select(&f_order, SplitTag::Forget),
        retain_combined: retain_all.select(&r_order, SplitTag::Retain),
        forget_source_labels: f_order.iter().map(|&i| source[i]).collect(),
    })
}

/// Fine-tunes a copy of `model`: every epoch runs one pass over the combined
/// forget set and then one over the combined retain set.
pub fn finetune_unlearn(
    model: &Network,
    sets: &CombinedSets,
    plan: &UnlearnPlan,
) -> Result<(Network, PhaseLog)> {
    plan.validate()?;
    check_classifier(model, &sets.forget_combined)?;
    check_classifier(model, &sets.retain_combined)?;
    let mut target = model.clone();
    let mut forget_opt = OptimizerState::new(&target, plan.forget_lr, plan.momentum)?;
    let mut retain_opt = OptimizerState::new(&target, plan.retain_lr, plan.momentum)?;
    let mut rng = seeded(derive_seed(plan.seed, "finetune"));
    let mut log = PhaseLog::default();
    for epoch in 1..=plan.finetune_epochs {
        for (phase, ds, opt) in [
            (Phase::Forget, &sets.forget_combined, &mut forget_opt),
            (Phase::Retain, &sets.retain_combined, &mut retain_opt),
        ] {
            let mean_loss =
                sgd_pass(&mut target, opt, ds, plan.batch_size, &mut rng).map_err(|e| match e {
                    Error::Numeric(m) => Error::numeric(format!(
                        "fine-tuning epoch {epoch}, {} phase: {m}",
                        phase.as_str()
                    )),
                    other => other,
                })?;
            debug!(
                "fine-tune epoch {epoch} {}: mean loss {mean_loss:.5}",
                phase.as_str()
            );
            log.entries.push(PhaseEntry {
                epoch,
                phase,
                mean_loss,
            });
        }
    }
    Ok((target, log))
}

/// Baseline 1: fine-tune on the retain set alone with its true labels. The
/// forget set is not an input.
pub fn baseline_retain_only(
    model: &Network,
    retain: &Dataset,
    plan: &UnlearnPlan,
) -> Result<(Network, PhaseLog)> {
    plan.validate()?;
    check_classifier(model, retain)?;
    let mut target = model.clone();
    let mut opt = OptimizerState::new(&target, plan.retain_lr, plan.momentum)?;
    let mut rng = seeded(derive_seed(plan.seed, "baseline_retain_only"));
    let mut log = PhaseLog::default();
    for epoch in 1..=plan.finetune_epochs {
        let mean_loss = sgd_pass(&mut target, &mut opt, retain, plan.batch_size, &mut rng)
            .map_err(|e| match e {
                Error::Numeric(m) => Error::numeric(format!(
                    "baseline fine-tuning epoch {epoch}, retain phase: {m}"
                )),
                other => other,
            })?;
        log.entries.push(PhaseEntry {
            epoch,
            phase: Phase::Retain,
            mean_loss,
        });
    }
    Ok((target, log))
}

/// Baseline 2: the inverted-label procedure with no synthetic data.
pub fn baseline_inverted_no_gan(
    model: &Network,
    forget: &Dataset,
    retain: &Dataset,
    plan: &UnlearnPlan,
) -> Result<(Network, PhaseLog)> {
    let plan = UnlearnPlan {
        synthetic_ratio: 0.0,
        ..plan.clone()
    };
    let sets = build_combined_sets(forget, retain, None, None, model, &plan)?;
    finetune_unlearn(model, &sets, &plan)
}
