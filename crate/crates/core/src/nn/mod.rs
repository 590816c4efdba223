//! Small deterministic feedforward networks.
//!
//! A [`Network`] is a stack of dense layers with one hidden activation shared
//! by every hidden layer and a separate output head. The same type backs the
//! classifier being unlearned as well as every generator and discriminator.

mod backprop;
mod checkpoint;
mod loss;
mod sgd;

pub use backprop::{
    compute_gradients, evaluate_objective, loss_and_gradients, GeneratorLoss, GradientSet,
    Objective,
};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub(crate) use loss::check_labels;
pub use loss::{bce, cross_entropy, softmax_in_place, PROB_CLAMP};
pub use sgd::{sgd_step, OptimizerState};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HiddenActivation {
    Relu,
    Tanh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    Identity,
    Sigmoid,
    Softmax,
}

impl HiddenActivation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            HiddenActivation::Relu => z.max(0.0),
            HiddenActivation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation `z`.
    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            HiddenActivation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            HiddenActivation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
        }
    }
}

#[inline]
pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Dense feedforward network. Layer `i` maps `layer_dims[i]` inputs to
/// `layer_dims[i + 1]` outputs with a weight matrix of shape `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub(crate) layer_dims: Vec<usize>,
    pub(crate) weights: Vec<Matrix>,
    pub(crate) biases: Vec<Vec<f64>>,
    pub(crate) hidden_activation: HiddenActivation,
    pub(crate) output_activation: OutputActivation,
    pub(crate) seed: u64,
}

/// Cached intermediate values of one forward pass, consumed by backprop.
pub(crate) struct ForwardTrace {
    /// `inputs[i]` is the input to layer `i`; `inputs[0]` is the batch itself.
    pub inputs: Vec<Matrix>,
    /// Pre-activations of every layer.
    pub pre_activations: Vec<Matrix>,
    pub output: Matrix,
}

/// Builds a network with weights drawn uniformly from `±1/sqrt(fan_in)` and
/// zero biases. Identical arguments always produce bit-identical networks.
pub fn init_network(
    layer_dims: &[usize],
    hidden_activation: HiddenActivation,
    output_activation: OutputActivation,
    seed: u64,
) -> Result<Network> {
    if layer_dims.len() < 2 {
        return Err(Error::config(format!(
            "a network needs at least 2 layer dims, got {}",
            layer_dims.len()
        )));
    }
    if let Some(pos) = layer_dims.iter().position(|&d| d == 0) {
        return Err(Error::config(format!("layer_dims[{pos}] is zero")));
    }
    let mut rng = crate::rng::seeded(seed);
    let mut weights = Vec::with_capacity(layer_dims.len() - 1);
    let mut biases = Vec::with_capacity(layer_dims.len() - 1);
    for pair in layer_dims.windows(2) {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let bound = 1.0 / (fan_in as f64).sqrt();
        let data = (0..fan_in * fan_out)
            .map(|_| rng.random_range(-bound..=bound))
            .collect();
        weights.push(Matrix::from_vec(fan_out, fan_in, data)?);
        biases.push(vec![0.0; fan_out]);
    }
    Ok(Network {
        layer_dims: layer_dims.to_vec(),
        weights,
        biases,
        hidden_activation,
        output_activation,
        seed,
    })
}

impl Network {
    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().expect("validated at construction")
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [Matrix] {
        &mut self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    pub fn biases_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.biases
    }

    pub fn hidden_activation(&self) -> HiddenActivation {
        self.hidden_activation
    }

    pub fn output_activation(&self) -> OutputActivation {
        self.output_activation
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Total number of scalar parameters.
    pub fn num_parameters(&self) -> usize {
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| w.as_slice().len() + b.len())
            .sum()
    }

    /// Visits every parameter in a fixed order: per layer, weights row-major then biases.
    pub fn parameters(&self) -> impl Iterator<Item = f64> + '_ {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| w.as_slice().iter().chain(b.iter()).copied())
    }

    /// Mutable access to the `k`-th parameter in [`Network::parameters`] order.
    pub fn parameter_mut(&mut self, mut k: usize) -> Option<&mut f64> {
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            let nw = w.as_slice().len();
            if k < nw {
                return Some(&mut w.as_mut_slice()[k]);
            }
            k -= nw;
            if k < b.len() {
                return Some(&mut b[k]);
            }
            k -= b.len();
        }
        None
    }

    pub fn all_finite(&self) -> bool {
        self.parameters().all(f64::is_finite)
    }

    /// Bit-level equality, distinguishing `0.0` from `-0.0`.
    pub fn bit_identical(&self, other: &Network) -> bool {
        self.layer_dims == other.layer_dims
            && self.hidden_activation == other.hidden_activation
            && self.output_activation == other.output_activation
            && self.seed == other.seed
            && self
                .parameters()
                .zip(other.parameters())
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }

    fn check_input(&self, batch: &Matrix) -> Result<()> {
        if batch.cols() != self.input_dim() {
            return Err(Error::shape(format!(
                "batch has {} columns, network expects {}",
                batch.cols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Runs the network on an `n x d` batch and returns the `n x c` head output.
    pub fn forward(&self, batch: &Matrix) -> Result<Matrix> {
        self.check_input(batch)?;
        let mut current = batch.clone();
        let last = self.num_layers() - 1;
        for (i, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = affine(&current, w, b);
            if i < last {
                z.as_mut_slice()
                    .iter_mut()
                    .for_each(|v| *v = self.hidden_activation.apply(*v));
            } else {
                self.apply_output(&mut z);
            }
            current = z;
        }
        Ok(current)
    }

    /// Pre-activations of the final layer.
    pub fn logits(&self, batch: &Matrix) -> Result<Matrix> {
        self.check_input(batch)?;
        let mut current = batch.clone();
        let last = self.num_layers() - 1;
        for (i, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = affine(&current, w, b);
            if i < last {
                z.as_mut_slice()
                    .iter_mut()
                    .for_each(|v| *v = self.hidden_activation.apply(*v));
            }
            current = z;
        }
        Ok(current)
    }

    pub(crate) fn forward_trace(&self, batch: &Matrix) -> Result<ForwardTrace> {
        self.check_input(batch)?;
        let mut inputs = Vec::with_capacity(self.num_layers());
        let mut pre_activations = Vec::with_capacity(self.num_layers());
        let mut current = batch.clone();
        let last = self.num_layers() - 1;
        for (i, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let z = affine(&current, w, b);
            let mut a = z.clone();
            if i < last {
                a.as_mut_slice()
                    .iter_mut()
                    .for_each(|v| *v = self.hidden_activation.apply(*v));
            } else {
                self.apply_output(&mut a);
            }
            inputs.push(current);
            pre_activations.push(z);
            current = a;
        }
        Ok(ForwardTrace {
            inputs,
            pre_activations,
            output: current,
        })
    }

    fn apply_output(&self, z: &mut Matrix) {
        match self.output_activation {
            OutputActivation::Identity => {}
            OutputActivation::Sigmoid => z.as_mut_slice().iter_mut().for_each(|v| *v = sigmoid(*v)),
            OutputActivation::Softmax => {
                for i in 0..z.rows() {
                    softmax_in_place(z.row_mut(i));
                }
            }
        }
    }
}

/// `x W^T + b` for a batch `x` of shape `n x in` and `W` of shape `out x in`.
pub(crate) fn affine(x: &Matrix, w: &Matrix, b: &[f64]) -> Matrix {
    let (n, fan_in) = x.shape();
    let fan_out = w.rows();
    debug_assert_eq!(w.cols(), fan_in);
    let mut out = Matrix::zeros(n, fan_out);
    for r in 0..n {
        let xr = x.row(r);
        let orow = out.row_mut(r);
        for (o, (wrow, bias)) in orow.iter_mut().zip(w.iter_rows().zip(b)) {
            let mut acc = *bias;
            for (xi, wi) in xr.iter().zip(wrow) {
                acc += xi * wi;
            }
            *o = acc;
        }
    }
    out
}

/// Argmax of each row of the head, ties resolved toward the smallest index.
pub fn predict_labels(net: &Network, batch: &Matrix) -> Result<Vec<usize>> {
    if net.output_dim() < 2 {
        return Err(Error::config(format!(
            "classification needs at least 2 outputs, network has {}",
            net.output_dim()
        )));
    }
    if net.output_activation == OutputActivation::Sigmoid {
        return Err(Error::config(
            "classification needs a softmax or identity head",
        ));
    }
    let logits = net.logits(batch)?;
    Ok(logits.iter_rows().map(argmax).collect())
}

/// Index of the largest value; the first one wins on ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}
