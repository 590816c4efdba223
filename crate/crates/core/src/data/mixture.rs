use rand::Rng;
use rand_distr::StandardNormal;

use super::{Dataset, SplitTag};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::{seeded, Rng as SeededRng};

fn draw_centers(rng: &mut SeededRng, num_classes: usize, dim: usize, separation: f64) -> Matrix {
    let mut centers = Matrix::zeros(num_classes, dim);
    for k in 0..num_classes {
        let row = centers.row_mut(k);
        loop {
            row.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 1e-12 {
                row.iter_mut().for_each(|v| *v *= separation / norm);
                break;
            }
        }
    }
    centers
}

/// Class centers used by [`generate_mixture`] for the same arguments: one
/// seeded random direction per class, scaled to norm `separation`.
pub fn mixture_centers(num_classes: usize, dim: usize, separation: f64, seed: u64) -> Matrix {
    draw_centers(&mut seeded(seed), num_classes, dim, separation)
}

/// Isotropic unit-variance Gaussian mixture with exactly `n / num_classes`
/// points per class. Row `i` belongs to class `i % num_classes`.
pub fn generate_mixture(
    num_classes: usize,
    dim: usize,
    n: usize,
    separation: f64,
    seed: u64,
) -> Result<Dataset> {
    if num_classes < 2 {
        return Err(Error::config(format!(
            "num_classes must be >= 2, got {num_classes}"
        )));
    }
    if dim < 2 {
        return Err(Error::config(format!("dim must be >= 2, got {dim}")));
    }
    if n == 0 || !n.is_multiple_of(num_classes) {
        return Err(Error::config(format!(
            "n = {n} is not a positive multiple of num_classes = {num_classes}"
        )));
    }
    if !(separation > 0.0 && separation.is_finite()) {
        return Err(Error::config(format!(
            "class separation must be positive, got {separation}"
        )));
    }
    let mut rng = seeded(seed);
    let centers = draw_centers(&mut rng, num_classes, dim, separation);
    let mut features = Matrix::zeros(n, dim);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let k = i % num_classes;
        let center = centers.row(k);
        for (v, c) in features.row_mut(i).iter_mut().zip(center) {
            let noise: f64 = rng.sample(StandardNormal);
            *v = c + noise;
        }
        labels.push(k);
    }
    Dataset::new(features, Some(labels), num_classes, SplitTag::Full, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_class_counts() {
        let ds = generate_mixture(10, 4, 1000, 4.0, 3).unwrap();
        let mut counts = [0usize; 10];
        ds.labels().unwrap().iter().for_each(|&l| counts[l] += 1);
        assert!(counts.iter().all(|&c| c == 100));
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate_mixture(3, 5, 30, 2.0, 99).unwrap();
        let b = generate_mixture(3, 5, 30, 2.0, 99).unwrap();
        assert!(a.bit_identical(&b));
        let c = generate_mixture(3, 5, 30, 2.0, 100).unwrap();
        assert!(!a.bit_identical(&c));
    }

    #[test]
    fn sample_means_concentrate_on_centers() {
        let (c, d, n, s, seed) = (2, 2, 2000, 6.0, 17);
        let ds = generate_mixture(c, d, n, s, seed).unwrap();
        let centers = mixture_centers(c, d, s, seed);
        for k in 0..c {
            let norm: f64 = centers.row(k).iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - s).abs() < 1e-12);
            for j in 0..d {
                let vals: Vec<f64> = ds
                    .features()
                    .iter_rows()
                    .zip(ds.labels().unwrap())
                    .filter(|(_, &l)| l == k)
                    .map(|(r, _)| r[j])
                    .collect();
                let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                assert!((mean - centers[(k, j)]).abs() < 3.0 / (1000f64).sqrt());
            }
        }
    }

    #[test]
    fn rejects_indivisible_n() {
        assert!(matches!(
            generate_mixture(3, 2, 10, 1.0, 0),
            Err(Error::Config(_))
        ));
        assert!(generate_mixture(2, 1, 10, 1.0, 0).is_err());
        assert!(generate_mixture(2, 2, 10, 0.0, 0).is_err());
    }
}
