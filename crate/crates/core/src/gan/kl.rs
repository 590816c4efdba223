//! Histogram estimate of KL(real || synthetic), averaged over feature dimensions.

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const DEFAULT_KL_BINS: usize = 32;
pub const DEFAULT_KL_EPSILON: f64 = 1e-6;

fn smoothed_histogram(values: &[f64], lo: f64, width: f64, bins: usize, epsilon: f64) -> Vec<f64> {
    let mut counts = vec![0usize; bins];
    for &v in values {
        let b = (((v - lo) / width).floor() as isize).clamp(0, bins as isize - 1) as usize;
        counts[b] += 1;
    }
    let n = values.len() as f64;
    let mut mass: Vec<f64> = counts.iter().map(|&c| c as f64 / n + epsilon).collect();
    let total: f64 = mass.iter().sum();
    mass.iter_mut().for_each(|m| *m /= total);
    mass
}

/// For every column, bins both samples over their combined range, adds
/// `epsilon` to each bin mass, renormalises, and computes KL(real_j || synth_j).
/// A column whose combined range is degenerate contributes 0.
pub fn estimate_kl(real: &Matrix, synth: &Matrix, bins: usize, epsilon: f64) -> Result<f64> {
    if real.rows() == 0 || synth.rows() == 0 {
        return Err(Error::shape("KL estimate needs two non-empty samples"));
    }
    if real.cols() != synth.cols() {
        return Err(Error::shape(format!(
            "real sample has {} columns, synthetic has {}",
            real.cols(),
            synth.cols()
        )));
    }
    if bins == 0 {
        return Err(Error::config("KL estimate needs at least one bin"));
    }
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::config(format!(
            "KL smoothing must be positive, got {epsilon}"
        )));
    }
    let d = real.cols();
    let mut total = 0.0;
    for j in 0..d {
        let p_vals = real.column(j);
        let q_vals = synth.column(j);
        let (lo, hi) = p_vals
            .iter()
            .chain(&q_vals)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        if hi <= lo {
            continue;
        }
        let width = (hi - lo) / bins as f64;
        let p = smoothed_histogram(&p_vals, lo, width, bins, epsilon);
        let q = smoothed_histogram(&q_vals, lo, width, bins, epsilon);
        total += p
            .iter()
            .zip(&q)
            .map(|(pi, qi)| pi * (pi / qi).ln())
            .sum::<f64>();
    }
    Ok((total / d as f64).max(0.0))
}
