//! JSON checkpoint envelope with base64-packed parameters.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{HiddenActivation, Network, OutputActivation};
use crate::codec::{decode_f64s, encode_f64s, json_error_offset, key_offset};
use crate::error::{Error, Result};
use crate::io::{read_text, write_atomic};
use crate::linalg::Matrix;

pub const CHECKPOINT_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Activations {
    pub hidden: HiddenActivation,
    pub output: OutputActivation,
}

/// On-disk form of a [`Network`]. `role` tags GAN members and baselines.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<String>,
    pub layer_dims: Vec<usize>,
    pub activations: Activations,
    pub seed: u64,
    pub weights: Vec<String>,
    pub biases: Vec<String>,
}

impl Checkpoint {
    pub fn from_network(net: &Network, role: Option<&str>) -> Self {
        Self {
            format_version: CHECKPOINT_VERSION,
            role: role.map(str::to_owned),
            layer_dims: net.layer_dims.clone(),
            activations: Activations {
                hidden: net.hidden_activation,
                output: net.output_activation,
            },
            seed: net.seed,
            weights: net
                .weights
                .iter()
                .map(|w| encode_f64s(w.as_slice()))
                .collect(),
            biases: net.biases.iter().map(|b| encode_f64s(b)).collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serializes")
    }

    /// Parses and validates a checkpoint document.
    pub fn parse(text: &str) -> Result<(Network, Option<String>)> {
        let ck: Checkpoint = serde_json::from_str(text).map_err(|e| Error::Format {
            offset: json_error_offset(text, &e),
            message: e.to_string(),
        })?;
        if ck.format_version != CHECKPOINT_VERSION {
            return Err(Error::Version {
                found: ck.format_version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let dims = &ck.layer_dims;
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::Format {
                offset: key_offset(text, "layer_dims"),
                message: format!("invalid layer_dims {dims:?}"),
            });
        }
        let layers = dims.len() - 1;
        if ck.weights.len() != layers || ck.biases.len() != layers {
            return Err(Error::Format {
                offset: key_offset(text, "weights"),
                message: format!(
                    "expected {layers} weight and bias payloads, found {} and {}",
                    ck.weights.len(),
                    ck.biases.len()
                ),
            });
        }
        let w_off = key_offset(text, "weights");
        let b_off = key_offset(text, "biases");
        let mut weights = Vec::with_capacity(layers);
        let mut biases = Vec::with_capacity(layers);
        for (i, pair) in dims.windows(2).enumerate() {
            let w = decode_f64s(&ck.weights[i], pair[0] * pair[1], w_off)?;
            weights.push(Matrix::from_vec(pair[1], pair[0], w)?);
            biases.push(decode_f64s(&ck.biases[i], pair[1], b_off)?);
        }
        let net = Network {
            layer_dims: ck.layer_dims,
            weights,
            biases,
            hidden_activation: ck.activations.hidden,
            output_activation: ck.activations.output,
            seed: ck.seed,
        };
        Ok((net, ck.role))
    }
}

pub fn save_checkpoint(net: &Network, role: Option<&str>, path: &Path) -> Result<()> {
    write_atomic(
        path,
        Checkpoint::from_network(net, role).to_json().as_bytes(),
    )
}

pub fn load_checkpoint(path: &Path) -> Result<(Network, Option<String>)> {
    Checkpoint::parse(&read_text(path)?)
}
