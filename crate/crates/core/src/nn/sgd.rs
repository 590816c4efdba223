use super::{GradientSet, Network};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Momentum SGD state: `v <- momentum * v + g; w <- w - lr * v`.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    learning_rate: f64,
    momentum: f64,
    velocity_w: Vec<Matrix>,
    velocity_b: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new(net: &Network, learning_rate: f64, momentum: f64) -> Result<Self> {
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(Error::config(format!(
                "learning rate must be positive, got {learning_rate}"
            )));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::config(format!(
                "momentum must lie in [0, 1), got {momentum}"
            )));
        }
        let zeros = GradientSet::zeros_like(net);
        Ok(Self {
            learning_rate,
            momentum,
            velocity_w: zeros.weights,
            velocity_b: zeros.biases,
        })
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn momentum(&self) -> f64 {
        self.momentum
    }
}

/// Applies one momentum step in place. A non-finite gradient aborts the step
/// before anything is modified.
pub fn sgd_step(net: &mut Network, grads: &GradientSet, opt: &mut OptimizerState) -> Result<()> {
    if !grads.is_congruent(net) || opt.velocity_w.len() != net.weights.len() {
        return Err(Error::shape(
            "gradient set is not congruent with the network",
        ));
    }
    if let Some(pos) = grads.values().position(|g| !g.is_finite()) {
        return Err(Error::numeric(format!(
            "non-finite gradient at parameter {pos}"
        )));
    }
    let (lr, mu) = (opt.learning_rate, opt.momentum);
    let layers = net
        .weights
        .iter_mut()
        .zip(net.biases.iter_mut())
        .zip(opt.velocity_w.iter_mut().zip(opt.velocity_b.iter_mut()))
        .zip(grads.weights.iter().zip(&grads.biases));
    for (((w, b), (vw, vb)), (gw, gb)) in layers {
        let params = w.as_mut_slice().iter_mut().chain(b.iter_mut());
        let vel = vw.as_mut_slice().iter_mut().chain(vb.iter_mut());
        let g = gw.as_slice().iter().chain(gb.iter());
        for ((p, v), g) in params.zip(vel).zip(g) {
            *v = mu * *v + g;
            *p -= lr * *v;
        }
    }
    Ok(())
}
