//! Dataset files: a JSON envelope with base64-packed row-major features.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, SplitTag};
use crate::codec::{decode_f64s, encode_f64s, json_error_offset, key_offset};
use crate::error::{Error, Result};
use crate::io::{read_text, write_atomic};
use crate::linalg::Matrix;

pub const DATASET_VERSION: u64 = 1;

#[derive(Serialize, Deserialize)]
struct Envelope {
    format_version: u64,
    #[serde(rename = "C")]
    num_classes: usize,
    d: usize,
    n: usize,
    split_tag: SplitTag,
    origin_seed: u64,
    features: String,
    labels: Option<Vec<usize>>,
}

impl Dataset {
    pub fn to_json(&self) -> String {
        let env = Envelope {
            format_version: DATASET_VERSION,
            num_classes: self.num_classes,
            d: self.dim(),
            n: self.len(),
            split_tag: self.split_tag,
            origin_seed: self.origin_seed,
            features: encode_f64s(self.features.as_slice()),
            labels: self.labels.clone(),
        };
        serde_json::to_string(&env).expect("dataset serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let env: Envelope = serde_json::from_str(text).map_err(|e| Error::Format {
            offset: json_error_offset(text, &e),
            message: e.to_string(),
        })?;
        if env.format_version != DATASET_VERSION {
            return Err(Error::Version {
                found: env.format_version,
                expected: DATASET_VERSION,
            });
        }
        let values = decode_f64s(&env.features, env.n * env.d, key_offset(text, "features"))?;
        if let Some(labels) = &env.labels {
            if labels.len() != env.n {
                return Err(Error::Format {
                    offset: key_offset(text, "labels"),
                    message: format!("{} labels for n = {}", labels.len(), env.n),
                });
            }
        }
        let features = Matrix::from_vec(env.n, env.d, values)?;
        Dataset::new(
            features,
            env.labels,
            env.num_classes,
            env.split_tag,
            env.origin_seed,
        )
        .map_err(|e| Error::Format {
            offset: key_offset(text, "labels"),
            message: e.to_string(),
        })
    }
}

pub fn store_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    write_atomic(path, ds.to_json().as_bytes())
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    Dataset::from_json(&read_text(path)?)
}
