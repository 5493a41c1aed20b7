use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::PuSplit;
use crate::error::{Error, Result};

/// Source-row indices of one mini-batch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchIndices {
    pub positive: Vec<usize>,
    pub unlabeled: Vec<usize>,
}

/// One epoch of mini-batches.
///
/// `P` and `U` are shuffled independently with a generator seeded by
/// `seed` on stream `epoch`. `U` is cut into consecutive chunks of
/// `batch_u` (the last one may be short), so every unlabeled sample is seen
/// exactly once; `P` is cut into chunks of `batch_p`, wrapping around its
/// permutation when it runs out.
pub fn make_batches(
    split: &PuSplit,
    batch_p: usize,
    batch_u: usize,
    seed: u64,
    epoch: u64,
) -> Result<Vec<BatchIndices>> {
    let pool_p = split.positive_idx();
    let pool_u = split.unlabeled_idx();
    if pool_p.is_empty() || pool_u.is_empty() {
        return Err(Error::EmptyBatch(format!(
            "|P| = {}, |U| = {}; both pools are required",
            pool_p.len(),
            pool_u.len()
        )));
    }
    if batch_p == 0 || batch_u == 0 {
        return Err(Error::InvalidArgument("batch sizes must be at least 1".into()));
    }
    if batch_p > pool_p.len() || batch_u > pool_u.len() {
        return Err(Error::InvalidArgument(format!(
            "batch sizes ({batch_p}, {batch_u}) exceed pool sizes ({}, {})",
            pool_p.len(),
            pool_u.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    let mut p = pool_p.to_vec();
    let mut u = pool_u.to_vec();
    p.shuffle(&mut rng);
    u.shuffle(&mut rng);

    let mut cursor = 0usize;
    let batches = u
        .chunks(batch_u)
        .map(|chunk| {
            let positive = (0..batch_p).map(|k| p[(cursor + k) % p.len()]).collect();
            cursor = (cursor + batch_p) % p.len();
            BatchIndices {
                positive,
                unlabeled: chunk.to_vec(),
            }
        })
        .collect();
    Ok(batches)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_pu_split, LabeledDataset};
    use ndarray::Array2;
    use std::collections::BTreeSet;
    use std::sync::Arc;

    fn split(n_pos: usize, n_neg: usize) -> PuSplit {
        let n = n_pos + n_neg;
        let labels = (0..n).map(|i| u8::from(i < n_pos)).collect();
        let ds = LabeledDataset::new(Array2::zeros((n, 1)), labels).unwrap();
        make_pu_split(Arc::new(ds), 0.0, 0).unwrap()
    }

    #[test]
    fn four_and_eight() {
        let b = make_batches(&split(4, 8), 2, 4, 1, 0).unwrap();
        assert_eq!(b.len(), 2);
        for batch in &b {
            assert_eq!(batch.positive.len(), 2);
            assert_eq!(batch.unlabeled.len(), 4);
        }
        let p: BTreeSet<_> = b.iter().flat_map(|x| x.positive.clone()).collect();
        assert_eq!(p.len(), 4);
    }

    #[test]
    fn short_final_chunk() {
        let b = make_batches(&split(3, 5), 1, 2, 1, 0).unwrap();
        let sizes: Vec<_> = b.iter().map(|x| x.unlabeled.len()).collect();
        assert_eq!(sizes, vec![2, 2, 1]);
    }

    #[test]
    fn every_unlabeled_seen_once_and_p_cycles() {
        let s = split(3, 10);
        let b = make_batches(&s, 2, 3, 9, 4).unwrap();
        let mut u: Vec<_> = b.iter().flat_map(|x| x.unlabeled.clone()).collect();
        u.sort_unstable();
        assert_eq!(u, s.unlabeled_idx());
        // 4 batches x 2 positives over a pool of 3: every positive appears
        let p: BTreeSet<_> = b.iter().flat_map(|x| x.positive.clone()).collect();
        assert_eq!(p.len(), 3);
    }

    #[test]
    fn deterministic_per_seed_and_epoch() {
        let s = split(20, 40);
        let a = make_batches(&s, 4, 8, 3, 2).unwrap();
        assert_eq!(a, make_batches(&s, 4, 8, 3, 2).unwrap());
        assert_ne!(a, make_batches(&s, 4, 8, 3, 3).unwrap());
        assert_ne!(a, make_batches(&s, 4, 8, 4, 2).unwrap());
    }

    #[test]
    fn oversized_batches_rejected() {
        assert!(make_batches(&split(2, 5), 3, 2, 0, 0).is_err());
        assert!(make_batches(&split(2, 5), 1, 6, 0, 0).is_err());
        assert!(make_batches(&split(2, 5), 0, 2, 0, 0).is_err());
    }
}
