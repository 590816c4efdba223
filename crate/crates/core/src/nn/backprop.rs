//! Reverse-mode gradients for [`Network`].

use serde::{Deserialize, Serialize};

use super::loss::{bce, check_labels, cross_entropy, softmax_in_place, PROB_CLAMP};
use super::{ForwardTrace, Network, OutputActivation};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Per-layer parameter gradients, shape-congruent with the network they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

impl GradientSet {
    pub fn zeros_like(net: &Network) -> Self {
        Self {
            weights: net
                .weights
                .iter()
                .map(|w| Matrix::zeros(w.rows(), w.cols()))
                .collect(),
            biases: net.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn is_congruent(&self, net: &Network) -> bool {
        self.weights.len() == net.weights.len()
            && self.biases.len() == net.biases.len()
            && self
                .weights
                .iter()
                .zip(&net.weights)
                .all(|(g, w)| g.shape() == w.shape())
            && self
                .biases
                .iter()
                .zip(&net.biases)
                .all(|(g, b)| g.len() == b.len())
    }

    /// Flattened view in the same order as [`Network::parameters`].
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| w.as_slice().iter().chain(b.iter()).copied())
    }

    pub fn all_finite(&self) -> bool {
        self.values().all(f64::is_finite)
    }

    pub fn add_assign(&mut self, other: &GradientSet) -> Result<()> {
        if self.weights.len() != other.weights.len() {
            return Err(Error::shape("gradient sets have different depths"));
        }
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            if a.shape() != b.shape() {
                return Err(Error::shape("gradient weight shapes differ"));
            }
            a.as_mut_slice()
                .iter_mut()
                .zip(b.as_slice())
                .for_each(|(x, y)| *x += y);
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            if a.len() != b.len() {
                return Err(Error::shape("gradient bias lengths differ"));
            }
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        Ok(())
    }
}

/// Generator objective when training through a frozen discriminator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorLoss {
    /// Descend `mean log(1 - D(G(z)))`.
    #[default]
    Minimax,
    /// Ascend `mean log D(G(z))`, i.e. descend `-mean log D(G(z))`.
    NonSaturating,
}

/// A loss together with its targets.
#[derive(Debug, Clone, Copy)]
pub enum Objective<'a> {
    /// Softmax cross-entropy on the final pre-activations.
    CrossEntropy { labels: &'a [usize] },
    /// Binary cross-entropy on a sigmoid head; `targets` is row-major `n x c`.
    Bce { targets: &'a [f64] },
    /// Generator loss evaluated through `discriminator`, whose parameters
    /// receive no gradient.
    ThroughFrozenDiscriminator {
        discriminator: &'a Network,
        loss: GeneratorLoss,
    },
}

/// Loss value and gradient with respect to the last layer's pre-activations.
fn head_gradient(
    net: &Network,
    trace: &ForwardTrace,
    objective: Objective<'_>,
) -> Result<(f64, Matrix)> {
    let logits = trace.pre_activations.last().expect("at least one layer");
    let (n, c) = logits.shape();
    let scale = if n == 0 { 0.0 } else { 1.0 / n as f64 };
    match objective {
        Objective::CrossEntropy { labels } => {
            if net.output_activation == OutputActivation::Sigmoid {
                return Err(Error::config(
                    "cross-entropy needs a softmax or identity head",
                ));
            }
            check_labels(labels, n, c)?;
            let (mean, _) = cross_entropy(logits, labels)?;
            let mut dz = logits.clone();
            for (i, &l) in labels.iter().enumerate() {
                let row = dz.row_mut(i);
                softmax_in_place(row);
                row[l] -= 1.0;
                row.iter_mut().for_each(|v| *v *= scale);
            }
            Ok((mean, dz))
        }
        Objective::Bce { targets } => {
            if net.output_activation != OutputActivation::Sigmoid {
                return Err(Error::config("binary cross-entropy needs a sigmoid head"));
            }
            let out = trace.output.as_slice();
            let loss = bce(out, targets)?;
            let scale = if out.is_empty() {
                0.0
            } else {
                1.0 / out.len() as f64
            };
            let data = out
                .iter()
                .zip(targets)
                .map(|(o, t)| (o - t) * scale)
                .collect();
            Ok((loss, Matrix::from_vec(n, c, data)?))
        }
        Objective::ThroughFrozenDiscriminator {
            discriminator,
            loss,
        } => {
            if discriminator.input_dim() != c {
                return Err(Error::shape(format!(
                    "generator emits {c} features, discriminator expects {}",
                    discriminator.input_dim()
                )));
            }
            if discriminator.output_dim() != 1
                || discriminator.output_activation != OutputActivation::Sigmoid
            {
                return Err(Error::config(
                    "discriminator must have a single sigmoid output",
                ));
            }
            let d_trace = discriminator.forward_trace(&trace.output)?;
            let probs = d_trace.output.as_slice();
            let (value, dz_d): (f64, Vec<f64>) = match loss {
                GeneratorLoss::Minimax => (
                    probs
                        .iter()
                        .map(|p| (1.0 - p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)).ln())
                        .sum::<f64>()
                        * scale,
                    probs.iter().map(|p| -p * scale).collect(),
                ),
                GeneratorLoss::NonSaturating => (
                    -probs
                        .iter()
                        .map(|p| p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP).ln())
                        .sum::<f64>()
                        * scale,
                    probs.iter().map(|p| (p - 1.0) * scale).collect(),
                ),
            };
            let dz_d = Matrix::from_vec(n, 1, dz_d)?;
            let d_input = backward_input_only(discriminator, &d_trace, dz_d);
            Ok((value, output_backward(net, trace, d_input)))
        }
    }
}

/// Chains an upstream gradient on the head output back through the output activation.
fn output_backward(net: &Network, trace: &ForwardTrace, mut upstream: Matrix) -> Matrix {
    match net.output_activation {
        OutputActivation::Identity => upstream,
        OutputActivation::Sigmoid => {
            upstream
                .as_mut_slice()
                .iter_mut()
                .zip(trace.output.as_slice())
                .for_each(|(g, o)| *g *= o * (1.0 - o));
            upstream
        }
        OutputActivation::Softmax => {
            for i in 0..upstream.rows() {
                let s = trace.output.row(i);
                let g = upstream.row_mut(i);
                let dot: f64 = g.iter().zip(s).map(|(a, b)| a * b).sum();
                g.iter_mut()
                    .zip(s)
                    .for_each(|(gv, sv)| *gv = sv * (*gv - dot));
            }
            upstream
        }
    }
}

/// Backpropagates `dz` (gradient on the last pre-activations) through every layer.
fn backward(net: &Network, trace: &ForwardTrace, dz: Matrix) -> GradientSet {
    let mut grads = GradientSet::zeros_like(net);
    let mut dz = dz;
    for layer in (0..net.num_layers()).rev() {
        let input = &trace.inputs[layer];
        let gw = &mut grads.weights[layer];
        let gb = &mut grads.biases[layer];
        for r in 0..dz.rows() {
            let dzr = dz.row(r);
            let xr = input.row(r);
            for (j, &d) in dzr.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                gb[j] += d;
                for (g, &x) in gw.row_mut(j).iter_mut().zip(xr) {
                    *g += d * x;
                }
            }
        }
        if layer > 0 {
            dz = propagate_to_input(net, layer, &dz);
            let prev = &trace.pre_activations[layer - 1];
            dz.as_mut_slice()
                .iter_mut()
                .zip(prev.as_slice())
                .for_each(|(g, &z)| *g *= net.hidden_activation.derivative(z));
        }
    }
    grads
}

/// Gradient with respect to the network input only; parameters are untouched.
fn backward_input_only(net: &Network, trace: &ForwardTrace, dz: Matrix) -> Matrix {
    let mut dz = dz;
    for layer in (0..net.num_layers()).rev() {
        dz = propagate_to_input(net, layer, &dz);
        if layer > 0 {
            let prev = &trace.pre_activations[layer - 1];
            dz.as_mut_slice()
                .iter_mut()
                .zip(prev.as_slice())
                .for_each(|(g, &z)| *g *= net.hidden_activation.derivative(z));
        }
    }
    dz
}

/// `dz W` for layer `layer`: gradient on that layer's input.
fn propagate_to_input(net: &Network, layer: usize, dz: &Matrix) -> Matrix {
    let w = &net.weights[layer];
    let mut out = Matrix::zeros(dz.rows(), w.cols());
    for r in 0..dz.rows() {
        let orow = out.row_mut(r);
        for (&d, wrow) in dz.row(r).iter().zip(w.iter_rows()) {
            if d == 0.0 {
                continue;
            }
            for (o, &wv) in orow.iter_mut().zip(wrow) {
                *o += d * wv;
            }
        }
    }
    out
}

/// Loss value and exact parameter gradients of `objective` at `net`.
pub fn loss_and_gradients(
    net: &Network,
    batch: &Matrix,
    objective: Objective<'_>,
) -> Result<(f64, GradientSet)> {
    let trace = net.forward_trace(batch)?;
    let (loss, dz) = head_gradient(net, &trace, objective)?;
    if !loss.is_finite() {
        return Err(Error::numeric(format!("loss evaluated to {loss}")));
    }
    Ok((loss, backward(net, &trace, dz)))
}

pub fn compute_gradients(
    net: &Network,
    batch: &Matrix,
    objective: Objective<'_>,
) -> Result<GradientSet> {
    loss_and_gradients(net, batch, objective).map(|(_, g)| g)
}

/// Loss value only, with no backward pass.
pub fn evaluate_objective(net: &Network, batch: &Matrix, objective: Objective<'_>) -> Result<f64> {
    let trace = net.forward_trace(batch)?;
    head_gradient(net, &trace, objective).map(|(loss, _)| loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{init_network, HiddenActivation};

    fn finite_difference_check(net: &Network, batch: &Matrix, objective: Objective<'_>) -> f64 {
        let grads = compute_gradients(net, batch, objective).unwrap();
        let analytic: Vec<f64> = grads.values().collect();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for (k, &a) in analytic.iter().enumerate() {
            let mut plus = net.clone();
            *plus.parameter_mut(k).unwrap() += h;
            let mut minus = net.clone();
            *minus.parameter_mut(k).unwrap() -= h;
            let numeric = (evaluate_objective(&plus, batch, objective).unwrap()
                - evaluate_objective(&minus, batch, objective).unwrap())
                / (2.0 * h);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
        }
        worst
    }

    fn batch(n: usize, d: usize, seed: u64) -> Matrix {
        let data = (0..n * d)
            .map(|i| ((i as f64 + seed as f64) * 0.7123).sin() * 1.5)
            .collect();
        Matrix::from_vec(n, d, data).unwrap()
    }

    #[test]
    fn cross_entropy_gradients_match_finite_differences() {
        let net = init_network(
            &[4, 5, 3],
            HiddenActivation::Tanh,
            OutputActivation::Softmax,
            5,
        )
        .unwrap();
        let x = batch(6, 4, 1);
        let labels = [0, 1, 2, 2, 1, 0];
        assert!(
            finite_difference_check(&net, &x, Objective::CrossEntropy { labels: &labels }) < 1e-4
        );
    }

    #[test]
    fn bce_gradients_match_finite_differences() {
        let net = init_network(
            &[4, 5, 1],
            HiddenActivation::Relu,
            OutputActivation::Sigmoid,
            9,
        )
        .unwrap();
        let x = batch(5, 4, 2);
        let targets = [1.0, 0.0, 1.0, 1.0, 0.0];
        assert!(finite_difference_check(&net, &x, Objective::Bce { targets: &targets }) < 1e-4);
    }

    #[test]
    fn generator_gradients_match_finite_differences() {
        let gen = init_network(
            &[3, 6, 4],
            HiddenActivation::Tanh,
            OutputActivation::Identity,
            2,
        )
        .unwrap();
        let disc = init_network(
            &[4, 5, 1],
            HiddenActivation::Tanh,
            OutputActivation::Sigmoid,
            3,
        )
        .unwrap();
        let z = batch(5, 3, 3);
        for loss in [GeneratorLoss::Minimax, GeneratorLoss::NonSaturating] {
            let obj = Objective::ThroughFrozenDiscriminator {
                discriminator: &disc,
                loss,
            };
            assert!(finite_difference_check(&gen, &z, obj) < 1e-4);
        }
    }

    #[test]
    fn dead_relu_units_give_zero_first_layer_gradients() {
        let net = init_network(
            &[4, 5, 3],
            HiddenActivation::Relu,
            OutputActivation::Softmax,
            1,
        )
        .unwrap();
        let grads = compute_gradients(
            &net,
            &Matrix::zeros(3, 4),
            Objective::CrossEntropy { labels: &[0, 1, 2] },
        )
        .unwrap();
        assert!(grads.weights[0].as_slice().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn linear_softmax_gradient_has_closed_form() {
        let net = init_network(
            &[3, 4],
            HiddenActivation::Relu,
            OutputActivation::Softmax,
            8,
        )
        .unwrap();
        let x = batch(5, 3, 4);
        let labels = [3, 0, 1, 1, 2];
        let grads =
            compute_gradients(&net, &x, Objective::CrossEntropy { labels: &labels }).unwrap();
        let probs = net.forward(&x).unwrap();
        for j in 0..4 {
            for k in 0..3 {
                let mut expect = 0.0;
                for r in 0..5 {
                    let onehot = if labels[r] == j { 1.0 } else { 0.0 };
                    expect += (probs[(r, j)] - onehot) * x[(r, k)];
                }
                expect /= 5.0;
                assert!((grads.weights[0][(j, k)] - expect).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn generator_gradient_is_congruent_with_generator_only() {
        let gen = init_network(
            &[2, 3, 4],
            HiddenActivation::Relu,
            OutputActivation::Identity,
            2,
        )
        .unwrap();
        let disc = init_network(
            &[4, 6, 1],
            HiddenActivation::Relu,
            OutputActivation::Sigmoid,
            3,
        )
        .unwrap();
        let before = disc.clone();
        let grads = compute_gradients(
            &gen,
            &batch(4, 2, 0),
            Objective::ThroughFrozenDiscriminator {
                discriminator: &disc,
                loss: GeneratorLoss::Minimax,
            },
        )
        .unwrap();
        assert!(grads.is_congruent(&gen));
        assert!(!grads.is_congruent(&disc));
        assert!(disc.bit_identical(&before));
    }

    #[test]
    fn objective_head_mismatch_is_rejected() {
        let net = init_network(
            &[2, 3],
            HiddenActivation::Relu,
            OutputActivation::Softmax,
            0,
        )
        .unwrap();
        let err = compute_gradients(
            &net,
            &Matrix::zeros(1, 2),
            Objective::Bce {
                targets: &[1.0, 0.0, 1.0],
            },
        );
        assert!(matches!(err, Err(Error::Config(_))));
        let err = compute_gradients(
            &net,
            &Matrix::zeros(1, 3),
            Objective::CrossEntropy { labels: &[0] },
        );
        assert!(matches!(err, Err(Error::Shape(_))));
    }
}
