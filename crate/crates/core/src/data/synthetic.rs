use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::LabeledDataset;
use crate::error::{Error, Result};

/// Two unit-variance isotropic Gaussians whose means sit at `±separation/2`
/// on the first axis. The first `n_per_class` rows are positive.
pub fn gen_two_gaussians(
    n_per_class: usize,
    d: usize,
    separation: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    if n_per_class == 0 || d == 0 {
        return Err(Error::InvalidArgument(format!(
            "n_per_class = {n_per_class} and d = {d} must both be at least 1"
        )));
    }
    if separation.is_nan() || separation < 0.0 || separation.is_infinite() {
        return Err(Error::InvalidArgument(format!(
            "separation must be finite and non-negative, got {separation}"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 2 * n_per_class;
    let mut features = Array2::<f64>::zeros((n, d));
    let mut labels = Vec::with_capacity(n);
    for (i, mut row) in features.rows_mut().into_iter().enumerate() {
        for v in row.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        let positive = i < n_per_class;
        row[0] += if positive { separation / 2.0 } else { -separation / 2.0 };
        labels.push(u8::from(positive));
    }
    LabeledDataset::new(features, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_bytes() {
        let a = gen_two_gaussians(50, 3, 2.0, 11).unwrap();
        let b = gen_two_gaussians(50, 3, 2.0, 11).unwrap();
        let bits = |ds: &LabeledDataset| ds.features().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        assert_eq!(a.labels(), b.labels());
        assert_ne!(bits(&a), bits(&gen_two_gaussians(50, 3, 2.0, 12).unwrap()));
    }

    #[test]
    fn zero_separation_draws_from_one_gaussian() {
        let ds = gen_two_gaussians(1, 1, 0.0, 5).unwrap();
        assert_eq!(ds.n_rows(), 2);
        assert_eq!(ds.labels(), &[1, 0]);
        // with zero shift the rows are just the first two standard normal draws
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a: f64 = StandardNormal.sample(&mut rng);
        let b: f64 = StandardNormal.sample(&mut rng);
        assert_eq!(ds.features()[[0, 0]], a);
        assert_eq!(ds.features()[[1, 0]], b);
    }

    #[test]
    fn class_means_are_shifted() {
        let ds = gen_two_gaussians(20_000, 2, 4.0, 3).unwrap();
        let x = ds.features();
        let mean = |lo: usize, hi: usize, c: usize| (lo..hi).map(|i| x[[i, c]]).sum::<f64>() / (hi - lo) as f64;
        assert!((mean(0, 20_000, 0) - 2.0).abs() < 0.03);
        assert!((mean(20_000, 40_000, 0) + 2.0).abs() < 0.03);
        assert!(mean(0, 20_000, 1).abs() < 0.03);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(gen_two_gaussians(0, 2, 1.0, 0).is_err());
        assert!(gen_two_gaussians(2, 0, 1.0, 0).is_err());
        assert!(gen_two_gaussians(2, 2, -1.0, 0).is_err());
        assert!(gen_two_gaussians(2, 2, f64::NAN, 0).is_err());
    }
}
