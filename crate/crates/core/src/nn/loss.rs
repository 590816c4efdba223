use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` before taking logs.
pub const PROB_CLAMP: f64 = 1e-12;

pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

pub(crate) fn check_labels(labels: &[usize], n: usize, classes: usize) -> Result<()> {
    if labels.len() != n {
        return Err(Error::shape(format!(
            "{} labels for {n} rows",
            labels.len()
        )));
    }
    if let Some((i, l)) = labels.iter().enumerate().find(|(_, &l)| l >= classes) {
        return Err(Error::Label(format!(
            "label {l} at row {i} is outside [0, {classes})"
        )));
    }
    Ok(())
}

/// Softmax cross-entropy on raw logits. Returns the mean loss and the loss of
/// every row.
pub fn cross_entropy(logits: &Matrix, labels: &[usize]) -> Result<(f64, Vec<f64>)> {
    check_labels(labels, logits.rows(), logits.cols())?;
    let per_sample: Vec<f64> = logits
        .iter_rows()
        .zip(labels)
        .map(|(row, &l)| (log_sum_exp(row) - row[l]).max(0.0))
        .collect();
    let mean = if per_sample.is_empty() {
        0.0
    } else {
        per_sample.iter().sum::<f64>() / per_sample.len() as f64
    };
    Ok((mean, per_sample))
}

/// Mean binary cross-entropy of probabilities against 0/1 targets.
pub fn bce(outputs: &[f64], targets: &[f64]) -> Result<f64> {
    if outputs.len() != targets.len() {
        return Err(Error::shape(format!(
            "{} outputs for {} targets",
            outputs.len(),
            targets.len()
        )));
    }
    if outputs.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = outputs
        .iter()
        .zip(targets)
        .map(|(&o, &t)| {
            let o = o.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            -(t * o.ln() + (1.0 - t) * (1.0 - o).ln())
        })
        .sum();
    Ok((total / outputs.len() as f64).max(0.0))
}
