//! Accuracy and loss-based membership inference.

mod attack;
mod report;

pub use attack::{balanced_accuracy, Attacker, AttackerKind, AttackerParams};
pub use report::{
    compile_report, MetricsReport, ModelMetrics, ReportInputs, EVAL_SETS, REPORT_MODELS,
};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{cross_entropy, predict_labels, Network};
use crate::rng::{permutation, seeded};

fn check_eval_set(model: &Network, ds: &Dataset) -> Result<()> {
    if ds.is_empty() {
        return Err(Error::config(format!("{:?} set is empty", ds.split_tag())));
    }
    if model.input_dim() != ds.dim() {
        return Err(Error::shape(format!(
            "model expects {} features, {:?} set has {}",
            model.input_dim(),
            ds.split_tag(),
            ds.dim()
        )));
    }
    Ok(())
}

/// Fraction of rows whose predicted label equals the stored label.
pub fn evaluate_accuracy(model: &Network, ds: &Dataset) -> Result<f64> {
    check_eval_set(model, ds)?;
    let predicted = predict_labels(model, ds.features())?;
    let hits = predicted
        .iter()
        .zip(ds.labels()?)
        .filter(|(p, l)| p == l)
        .count();
    Ok(hits as f64 / ds.len() as f64)
}

/// Cross-entropy of every row against its stored label.
pub fn per_sample_losses(model: &Network, ds: &Dataset) -> Result<Vec<f64>> {
    check_eval_set(model, ds)?;
    let logits = model.logits(ds.features())?;
    cross_entropy(&logits, ds.labels()?).map(|(_, per)| per)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiaConfig {
    pub attackers: Vec<AttackerKind>,
    pub cv_folds: usize,
    pub balance_seed: u64,
    pub params: AttackerParams,
}

impl Default for MiaConfig {
    fn default() -> Self {
        Self {
            attackers: AttackerKind::ALL.to_vec(),
            cv_folds: 5,
            balance_seed: 0,
            params: AttackerParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackerScore {
    pub attacker: AttackerKind,
    /// Mean of `fold_scores`.
    pub score: f64,
    pub fold_scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiaReport {
    pub model: String,
    /// Rows per side after balancing.
    pub forget_size: usize,
    pub test_size: usize,
    pub attackers: Vec<AttackerScore>,
}

impl MiaReport {
    pub fn score(&self, kind: AttackerKind) -> Option<f64> {
        self.attackers
            .iter()
            .find(|a| a.attacker == kind)
            .map(|a| a.score)
    }
}

/// Runs every configured attacker on the model's per-sample losses, with
/// forget rows as members and test rows as non-members.
pub fn mia_score(
    model: &Network,
    name: &str,
    forget: &Dataset,
    test: &Dataset,
    cfg: &MiaConfig,
) -> Result<MiaReport> {
    let member = per_sample_losses(model, forget)?;
    let non_member = per_sample_losses(model, test)?;
    mia_score_from_losses(name, &member, &non_member, cfg)
}

/// Membership inference on precomputed losses. The larger side is
/// subsampled (seeded) to the size of the smaller, folds are stratified, and
/// each attacker's score is its mean balanced accuracy over held-out folds.
pub fn mia_score_from_losses(
    name: &str,
    member: &[f64],
    non_member: &[f64],
    cfg: &MiaConfig,
) -> Result<MiaReport> {
    let k = cfg.cv_folds;
    if k < 2 {
        return Err(Error::config(format!("cv_folds must be >= 2, got {k}")));
    }
    if member.len() < k || non_member.len() < k {
        return Err(Error::config(format!(
            "cv_folds = {k} exceeds a side of sizes {} and {}",
            member.len(),
            non_member.len()
        )));
    }
    if cfg.attackers.is_empty() {
        return Err(Error::config("no attackers configured"));
    }
    let mut rng = seeded(cfg.balance_seed);
    let m = member.len().min(non_member.len());
    let balance = |values: &[f64], rng: &mut crate::rng::Rng| -> Vec<f64> {
        if values.len() == m {
            return values.to_vec();
        }
        let mut keep = permutation(values.len(), rng)[..m].to_vec();
        keep.sort_unstable();
        keep.into_iter().map(|i| values[i]).collect()
    };
    let member = balance(member, &mut rng);
    let non_member = balance(non_member, &mut rng);

    let x: Vec<f64> = member.iter().chain(&non_member).copied().collect();
    let y: Vec<bool> = (0..2 * m).map(|i| i < m).collect();
    // Stratified folds: each side is permuted separately and dealt round-robin.
    let mut fold_of = vec![0usize; 2 * m];
    for offset in [0, m] {
        for (pos, idx) in permutation(m, &mut rng).into_iter().enumerate() {
            fold_of[offset + idx] = pos % k;
        }
    }

    let mut attackers = Vec::with_capacity(cfg.attackers.len());
    for &kind in &cfg.attackers {
        let mut fold_scores = Vec::with_capacity(k);
        for fold in 0..k {
            let (mut tx, mut ty, mut ex, mut ey) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
            for i in 0..2 * m {
                if fold_of[i] == fold {
                    ex.push(x[i]);
                    ey.push(y[i]);
                } else {
                    tx.push(x[i]);
                    ty.push(y[i]);
                }
            }
            if !(ty.contains(&true) && ty.contains(&false)) {
                warn!(
                    "{name}/{}: fold {fold} has single-class training data, skipped",
                    kind.as_str()
                );
                continue;
            }
            let attacker = Attacker::fit(kind, &tx, &ty, &cfg.params);
            let pred: Vec<bool> = ex.iter().map(|&v| attacker.predict(v)).collect();
            match balanced_accuracy(&pred, &ey) {
                Some(s) => fold_scores.push(s),
                None => warn!(
                    "{name}/{}: fold {fold} is single-class, skipped",
                    kind.as_str()
                ),
            }
        }
        if fold_scores.is_empty() {
            return Err(Error::Evaluation(format!(
                "{name}/{}: every cross-validation fold was degenerate",
                kind.as_str()
            )));
        }
        let score = fold_scores.iter().sum::<f64>() / fold_scores.len() as f64;
        attackers.push(AttackerScore {
            attacker: kind,
            score,
            fold_scores,
        });
    }
    Ok(MiaReport {
        model: name.to_owned(),
        forget_size: m,
        test_size: m,
        attackers,
    })
}
