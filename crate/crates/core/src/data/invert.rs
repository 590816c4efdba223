use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::seeded;

/// How a forget-set label is replaced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InversionMode {
    /// `l -> (C - 1) - l`; the odd-`C` midpoint falls back to a random other class.
    #[default]
    Complement,
    /// A uniformly random class different from `l`.
    RandomDifferent,
}

/// Replaces every label by a different class. The output never equals the
/// input element-wise.
pub fn invert_labels(
    labels: &[usize],
    num_classes: usize,
    mode: InversionMode,
    seed: u64,
) -> Result<Vec<usize>> {
    if num_classes < 2 {
        return Err(Error::config(format!(
            "label inversion needs at least 2 classes, got {num_classes}"
        )));
    }
    if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= num_classes) {
        return Err(Error::Label(format!(
            "label {l} at position {i} is outside [0, {num_classes})"
        )));
    }
    let mut rng = seeded(seed);
    let mut random_other = |l: usize| (l + 1 + rng.random_range(0..num_classes - 1)) % num_classes;
    Ok(labels
        .iter()
        .map(|&l| match mode {
            InversionMode::Complement => {
                let c = num_classes - 1 - l;
                if c == l {
                    random_other(l)
                } else {
                    c
                }
            }
            InversionMode::RandomDifferent => random_other(l),
        })
        .collect())
}
