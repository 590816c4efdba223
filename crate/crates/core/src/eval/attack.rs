//! One-feature binary attackers trained from scratch.
//!
//! Labels are `true` for members (forget rows) and `false` for non-members.

use serde::{Deserialize, Serialize};

use crate::nn::sigmoid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackerKind {
    Logreg,
    LinearSvm,
    BoostedStumps,
}

impl AttackerKind {
    pub const ALL: [AttackerKind; 3] = [
        AttackerKind::Logreg,
        AttackerKind::LinearSvm,
        AttackerKind::BoostedStumps,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AttackerKind::Logreg => "logreg",
            AttackerKind::LinearSvm => "linear_svm",
            AttackerKind::BoostedStumps => "boosted_stumps",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackerParams {
    /// Gradient iterations for the linear attackers.
    pub iterations: usize,
    pub learning_rate: f64,
    /// L2 penalty on the linear weight.
    pub regularization: f64,
    pub stump_count: usize,
    /// Shrinkage applied to every stump's leaf values.
    pub stump_shrinkage: f64,
}

impl Default for AttackerParams {
    fn default() -> Self {
        Self {
            iterations: 300,
            learning_rate: 0.5,
            regularization: 1e-3,
            stump_count: 50,
            stump_shrinkage: 0.3,
        }
    }
}

/// L2 penalty on stump leaf values (the usual gradient-boosting `lambda`).
const LEAF_L2: f64 = 1.0;

#[derive(Debug, Clone, Copy)]
pub struct Standardizer {
    mean: f64,
    scale: f64,
}

impl Standardizer {
    fn fit(x: &[f64]) -> Self {
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        Self {
            mean,
            scale: if sd > 1e-12 { 1.0 / sd } else { 1.0 },
        }
    }

    #[inline]
    fn apply(&self, v: f64) -> f64 {
        (v - self.mean) * self.scale
    }
}

/// A fitted attacker.
#[derive(Debug, Clone)]
pub enum Attacker {
    Linear {
        standardizer: Standardizer,
        weight: f64,
        bias: f64,
    },
    Stumps {
        base: f64,
        stumps: Vec<Stump>,
    },
}

#[derive(Debug, Clone, Copy)]
pub struct Stump {
    threshold: f64,
    left: f64,
    right: f64,
}

impl Attacker {
    pub fn fit(kind: AttackerKind, x: &[f64], y: &[bool], params: &AttackerParams) -> Self {
        match kind {
            AttackerKind::Logreg => fit_logreg(x, y, params),
            AttackerKind::LinearSvm => fit_svm(x, y, params),
            AttackerKind::BoostedStumps => fit_stumps(x, y, params),
        }
    }

    /// Decision value; positive means "member".
    pub fn decision(&self, v: f64) -> f64 {
        match self {
            Attacker::Linear {
                standardizer,
                weight,
                bias,
            } => weight * standardizer.apply(v) + bias,
            Attacker::Stumps { base, stumps } => {
                base + stumps
                    .iter()
                    .map(|s| if v <= s.threshold { s.left } else { s.right })
                    .sum::<f64>()
            }
        }
    }

    pub fn predict(&self, v: f64) -> bool {
        self.decision(v) > 0.0
    }
}

fn fit_logreg(x: &[f64], y: &[bool], p: &AttackerParams) -> Attacker {
    let standardizer = Standardizer::fit(x);
    let xs: Vec<f64> = x.iter().map(|&v| standardizer.apply(v)).collect();
    let n = xs.len() as f64;
    let (mut w, mut b) = (0.0, 0.0);
    for _ in 0..p.iterations {
        let (mut gw, mut gb) = (0.0, 0.0);
        for (&xi, &yi) in xs.iter().zip(y) {
            let r = sigmoid(w * xi + b) - if yi { 1.0 } else { 0.0 };
            gw += r * xi;
            gb += r;
        }
        w -= p.learning_rate * (gw / n + p.regularization * w);
        b -= p.learning_rate * gb / n;
    }
    Attacker::Linear {
        standardizer,
        weight: w,
        bias: b,
    }
}

/// Subgradient descent on `lambda/2 w^2 + mean hinge(1 - y (w x + b))` with
/// step `lr / sqrt(t)`.
fn fit_svm(x: &[f64], y: &[bool], p: &AttackerParams) -> Attacker {
    let standardizer = Standardizer::fit(x);
    let xs: Vec<f64> = x.iter().map(|&v| standardizer.apply(v)).collect();
    let n = xs.len() as f64;
    let (mut w, mut b) = (0.0, 0.0);
    for t in 1..=p.iterations {
        let (mut gw, mut gb) = (p.regularization * w, 0.0);
        for (&xi, &yi) in xs.iter().zip(y) {
            let s = if yi { 1.0 } else { -1.0 };
            if s * (w * xi + b) < 1.0 {
                gw -= s * xi / n;
                gb -= s / n;
            }
        }
        let step = p.learning_rate / (t as f64).sqrt();
        w -= step * gw;
        b -= step * gb;
    }
    Attacker::Linear {
        standardizer,
        weight: w,
        bias: b,
    }
}

/// Stage-wise additive depth-1 trees on logistic-loss gradients with Newton
/// leaf values.
fn fit_stumps(x: &[f64], y: &[bool], p: &AttackerParams) -> Attacker {
    let n = x.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let positives = y.iter().filter(|&&v| v).count() as f64;
    let prior = ((positives + 0.5) / (n as f64 - positives + 0.5)).ln();
    let mut scores = vec![prior; n];
    let mut stumps = Vec::with_capacity(p.stump_count);
    let target = |i: usize| if y[i] { 1.0 } else { 0.0 };

    for _ in 0..p.stump_count {
        let mut grad = vec![0.0; n];
        let mut hess = vec![0.0; n];
        for i in 0..n {
            let prob = sigmoid(scores[i]);
            grad[i] = prob - target(i);
            hess[i] = (prob * (1.0 - prob)).max(1e-12);
        }
        let g_total: f64 = grad.iter().sum();
        let h_total: f64 = hess.iter().sum();
        let gain = |g: f64, h: f64| g * g / (h + LEAF_L2);

        let mut best: Option<(f64, f64, f64, f64)> = None; // (gain, threshold, g_left, h_left)
        let (mut gl, mut hl) = (0.0, 0.0);
        for w in 0..n.saturating_sub(1) {
            let (i, j) = (order[w], order[w + 1]);
            gl += grad[i];
            hl += hess[i];
            if x[i] == x[j] {
                continue;
            }
            let g = gain(gl, hl) + gain(g_total - gl, h_total - hl);
            if best.is_none_or(|b| g > b.0) {
                best = Some((g, 0.5 * (x[i] + x[j]), gl, hl));
            }
        }
        let stump = match best {
            Some((_, threshold, gl, hl)) => Stump {
                threshold,
                left: -p.stump_shrinkage * gl / (hl + LEAF_L2),
                right: -p.stump_shrinkage * (g_total - gl) / (h_total - hl + LEAF_L2),
            },
            None => {
                let v = -p.stump_shrinkage * g_total / (h_total + LEAF_L2);
                Stump {
                    threshold: f64::INFINITY,
                    left: v,
                    right: v,
                }
            }
        };
        for (s, &xi) in scores.iter_mut().zip(x) {
            *s += if xi <= stump.threshold {
                stump.left
            } else {
                stump.right
            };
        }
        stumps.push(stump);
    }
    Attacker::Stumps {
        base: prior,
        stumps,
    }
}

/// Mean of the per-class recalls. `None` when either class is absent.
pub fn balanced_accuracy(predicted: &[bool], actual: &[bool]) -> Option<f64> {
    let (mut tp, mut pos, mut tn, mut neg) = (0usize, 0usize, 0usize, 0usize);
    for (&p, &a) in predicted.iter().zip(actual) {
        if a {
            pos += 1;
            tp += usize::from(p);
        } else {
            neg += 1;
            tn += usize::from(!p);
        }
    }
    if pos == 0 || neg == 0 {
        return None;
    }
    Some(0.5 * (tp as f64 / pos as f64 + tn as f64 / neg as f64))
}
