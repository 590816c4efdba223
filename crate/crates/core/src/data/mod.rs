//! Labelled feature matrices and everything that produces or reshapes them.

mod invert;
mod mixture;
mod split;
mod store;

pub use invert::{invert_labels, InversionMode};
pub use mixture::{generate_mixture, mixture_centers};
pub use split::{split_dataset, ForgetMode, SplitSpec, Splits};
pub use store::{load_dataset, store_dataset, DATASET_VERSION};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Which role a dataset plays in the unlearning pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitTag {
    /// The generated pool before splitting.
    Full,
    Train,
    Test,
    Forget,
    Retain,
    SyntheticForget,
    SyntheticRetain,
}

/// Feature matrix plus optional class labels. Synthetic samples start out
/// unlabelled and receive labels from the pre-trained classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Matrix,
    labels: Option<Vec<usize>>,
    num_classes: usize,
    split_tag: SplitTag,
    origin_seed: u64,
}

impl Dataset {
    pub fn new(
        features: Matrix,
        labels: Option<Vec<usize>>,
        num_classes: usize,
        split_tag: SplitTag,
        origin_seed: u64,
    ) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::config(format!(
                "num_classes must be >= 2, got {num_classes}"
            )));
        }
        if let Some(labels) = &labels {
            crate::nn::check_labels(labels, features.rows(), num_classes)?;
        }
        if !features.all_finite() {
            return Err(Error::numeric("dataset features contain non-finite values"));
        }
        Ok(Self {
            features,
            labels,
            num_classes,
            split_tag,
            origin_seed,
        })
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn split_tag(&self) -> SplitTag {
        self.split_tag
    }

    pub fn origin_seed(&self) -> u64 {
        self.origin_seed
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn is_labeled(&self) -> bool {
        self.labels.is_some()
    }

    pub fn labels(&self) -> Result<&[usize]> {
        self.labels
            .as_deref()
            .ok_or_else(|| Error::Label(format!("{:?} dataset has no labels", self.split_tag)))
    }

    pub fn with_labels(&self, labels: Vec<usize>) -> Result<Self> {
        Self::new(
            self.features.clone(),
            Some(labels),
            self.num_classes,
            self.split_tag,
            self.origin_seed,
        )
    }

    pub fn with_tag(mut self, tag: SplitTag) -> Self {
        self.split_tag = tag;
        self
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize], tag: SplitTag) -> Self {
        Self {
            features: self.features.select_rows(indices),
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
            num_classes: self.num_classes,
            split_tag: tag,
            origin_seed: self.origin_seed,
        }
    }

    /// `self` followed by `other`. Both must be labelled (or both not).
    pub fn concat(&self, other: &Dataset, tag: SplitTag) -> Result<Self> {
        if self.num_classes != other.num_classes {
            return Err(Error::config(format!(
                "cannot concatenate datasets with {} and {} classes",
                self.num_classes, other.num_classes
            )));
        }
        let labels = match (&self.labels, &other.labels) {
            (Some(a), Some(b)) => Some(a.iter().chain(b).copied().collect()),
            (None, None) => None,
            _ if other.is_empty() => self.labels.clone(),
            _ if self.is_empty() => other.labels.clone(),
            _ => {
                return Err(Error::Label(
                    "cannot concatenate labelled and unlabelled rows".into(),
                ))
            }
        };
        Ok(Self {
            features: self.features.vstack(&other.features)?,
            labels,
            num_classes: self.num_classes,
            split_tag: tag,
            origin_seed: self.origin_seed,
        })
    }

    /// Bit-level equality of features and labels plus metadata.
    pub fn bit_identical(&self, other: &Dataset) -> bool {
        self.features.shape() == other.features.shape()
            && self
                .features
                .as_slice()
                .iter()
                .zip(other.features.as_slice())
                .all(|(a, b)| a.to_bits() == b.to_bits())
            && self.labels == other.labels
            && self.num_classes == other.num_classes
            && self.split_tag == other.split_tag
            && self.origin_seed == other.origin_seed
    }
}
