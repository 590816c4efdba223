use serde::{Deserialize, Serialize};

use super::{Dataset, SplitTag};
use crate::error::{Error, Result};
use crate::rng::{permutation, seeded};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ForgetMode {
    /// Uniformly random training rows.
    #[default]
    Random,
    /// Training rows of a single class only.
    ClassTargeted { class: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    /// Share of the full pool held out as the test set.
    pub test_fraction: f64,
    /// Share of the training set that becomes the forget set.
    pub forget_fraction: f64,
    #[serde(default)]
    pub forget_mode: ForgetMode,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            test_fraction: 0.1,
            forget_fraction: 0.1,
            forget_mode: ForgetMode::Random,
            seed: 0,
        }
    }
}

/// The four pipeline sets plus the row indices (into the full pool) each was built from.
#[derive(Debug, Clone)]
pub struct Splits {
    pub train: Dataset,
    pub test: Dataset,
    pub forget: Dataset,
    pub retain: Dataset,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub forget_indices: Vec<usize>,
    pub retain_indices: Vec<usize>,
}

fn check_fraction(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v < 1.0) {
        return Err(Error::config(format!("{name} must lie in (0, 1), got {v}")));
    }
    Ok(())
}

/// Splits `full` into test and train, then train into forget and retain.
/// Index lists are sorted ascending.
pub fn split_dataset(full: &Dataset, spec: &SplitSpec) -> Result<Splits> {
    check_fraction("test_fraction", spec.test_fraction)?;
    check_fraction("forget_fraction", spec.forget_fraction)?;
    let labels = full.labels()?;
    let n = full.len();
    let n_test = (n as f64 * spec.test_fraction).round() as usize;
    if n_test == 0 || n_test >= n {
        return Err(Error::config(format!(
            "test_fraction {} leaves an empty test or train set for n = {n}",
            spec.test_fraction
        )));
    }
    let mut rng = seeded(spec.seed);
    let perm = permutation(n, &mut rng);
    let mut test_indices = perm[..n_test].to_vec();
    let mut train_indices = perm[n_test..].to_vec();
    test_indices.sort_unstable();
    train_indices.sort_unstable();

    let n_train = train_indices.len();
    let n_forget = (n_train as f64 * spec.forget_fraction).round() as usize;
    let mut forget_indices: Vec<usize> = match spec.forget_mode {
        ForgetMode::Random => {
            if n_forget == 0 || n_forget >= n_train {
                return Err(Error::config(format!(
                    "forget_fraction {} leaves an empty forget or retain set for {n_train} training rows",
                    spec.forget_fraction
                )));
            }
            permutation(n_train, &mut rng)[..n_forget]
                .iter()
                .map(|&p| train_indices[p])
                .collect()
        }
        ForgetMode::ClassTargeted { class } => {
            if class >= full.num_classes() {
                return Err(Error::config(format!(
                    "forget class {class} is outside [0, {})",
                    full.num_classes()
                )));
            }
            let members: Vec<usize> = train_indices
                .iter()
                .copied()
                .filter(|&i| labels[i] == class)
                .collect();
            let take = n_forget.min(members.len());
            if take == 0 || take >= n_train {
                return Err(Error::config(format!(
                    "class {class} has {} training members; cannot form a forget set of up to {n_forget}",
                    members.len()
                )));
            }
            permutation(members.len(), &mut rng)[..take]
                .iter()
                .map(|&p| members[p])
                .collect()
        }
    };
    forget_indices.sort_unstable();
    let retain_indices: Vec<usize> = train_indices
        .iter()
        .copied()
        .filter(|i| forget_indices.binary_search(i).is_err())
        .collect();

    Ok(Splits {
        train: full.select(&train_indices, SplitTag::Train),
        test: full.select(&test_indices, SplitTag::Test),
        forget: full.select(&forget_indices, SplitTag::Forget),
        retain: full.select(&retain_indices, SplitTag::Retain),
        train_indices,
        test_indices,
        forget_indices,
        retain_indices,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_mixture;
    use proptest::prelude::*;

    #[test]
    fn sizes_mirror_the_ten_percent_ratios() {
        let full = generate_mixture(10, 4, 5000, 4.0, 1).unwrap();
        let s = split_dataset(
            &full,
            &SplitSpec {
                seed: 3,
                ..SplitSpec::default()
            },
        )
        .unwrap();
        assert_eq!(
            (s.test.len(), s.forget.len(), s.retain.len()),
            (500, 450, 4050)
        );
        assert_eq!(s.forget.split_tag(), SplitTag::Forget);
    }

    #[test]
    fn class_targeted_forget_holds_one_class() {
        let full = generate_mixture(10, 4, 1000, 4.0, 1).unwrap();
        let spec = SplitSpec {
            forget_mode: ForgetMode::ClassTargeted { class: 3 },
            seed: 5,
            ..SplitSpec::default()
        };
        let s = split_dataset(&full, &spec).unwrap();
        assert!(!s.forget.is_empty());
        assert!(s.forget.labels().unwrap().iter().all(|&l| l == 3));
    }

    #[test]
    fn class_targeted_without_members_fails() {
        let full = generate_mixture(2, 2, 40, 4.0, 1).unwrap();
        let spec = SplitSpec {
            forget_mode: ForgetMode::ClassTargeted { class: 5 },
            ..SplitSpec::default()
        };
        assert!(matches!(split_dataset(&full, &spec), Err(Error::Config(_))));
    }

    #[test]
    fn zero_forget_fraction_is_rejected() {
        let full = generate_mixture(2, 2, 40, 4.0, 1).unwrap();
        let spec = SplitSpec {
            forget_fraction: 0.0,
            ..SplitSpec::default()
        };
        assert!(matches!(split_dataset(&full, &spec), Err(Error::Config(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn partition_law(seed in any::<u64>(), tf in 0.05f64..0.5, ff in 0.05f64..0.5, targeted in any::<bool>()) {
            let full = generate_mixture(4, 2, 400, 3.0, seed).unwrap();
            let forget_mode = if targeted { ForgetMode::ClassTargeted { class: 1 } } else { ForgetMode::Random };
            let s = split_dataset(&full, &SplitSpec { test_fraction: tf, forget_fraction: ff, forget_mode, seed }).unwrap();
            let mut union: Vec<usize> = s.forget_indices.iter().chain(&s.retain_indices).copied().collect();
            union.sort_unstable();
            prop_assert_eq!(&union, &s.train_indices);
            prop_assert!(s.test_indices.iter().all(|i| s.train_indices.binary_search(i).is_err()));
            prop_assert_eq!(s.train_indices.len() + s.test_indices.len(), 400);
            let again = split_dataset(&full, &SplitSpec { test_fraction: tf, forget_fraction: ff, forget_mode, seed }).unwrap();
            prop_assert_eq!(again.forget_indices, s.forget_indices);
        }
    }
}
