use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{Mixture, MixturePair};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A fresh random pairing of `0..len` for one epoch. Every index appears in
/// at most one pair; with odd `len` the leftover index is dropped.
pub fn epoch_pairs(len: usize, seed: u64, epoch: u64) -> Vec<(usize, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(&mut rng);
    order.chunks_exact(2).map(|p| (p[0], p[1])).collect()
}

/// Epoch pairs grouped into batches of `batch_size` pairs; the last batch may
/// be short.
pub fn epoch_batches(
    len: usize,
    batch_size: usize,
    seed: u64,
    epoch: u64,
) -> Result<Vec<Vec<(usize, usize)>>> {
    if batch_size < 1 {
        return Err(Error::Config("batch_size must be at least 1".into()));
    }
    if len < 2 {
        return Err(Error::Config(format!("need at least 2 mixtures to pair, got {len}")));
    }
    Ok(epoch_pairs(len, seed, epoch)
        .chunks(batch_size)
        .map(<[_]>::to_vec)
        .collect())
}

/// `count` distinct indices from `0..len` (all of them if `count >= len`),
/// in sampled order.
pub fn sample_indices(len: usize, count: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rand::seq::index::sample(&mut rng, len, count.min(len)).into_vec()
}

/// Endless stream of pair batches over successive epochs.
pub struct BatchStream<'a, T> {
    dataset: &'a [Mixture<T>],
    batch_size: usize,
    seed: u64,
    epoch: u64,
    pending: std::vec::IntoIter<Vec<(usize, usize)>>,
}

impl<'a, T: Scalar> BatchStream<'a, T> {
    pub fn epoch(&self) -> u64 {
        self.epoch
    }
}

pub fn batch_pairs<T: Scalar>(
    dataset: &[Mixture<T>],
    batch_size: usize,
    seed: u64,
) -> Result<BatchStream<'_, T>> {
    let first = epoch_batches(dataset.len(), batch_size, seed, 0)?;
    Ok(BatchStream {
        dataset,
        batch_size,
        seed,
        epoch: 0,
        pending: first.into_iter(),
    })
}

impl<T: Scalar> Iterator for BatchStream<'_, T> {
    type Item = Vec<MixturePair<T>>;

    fn next(&mut self) -> Option<Self::Item> {
        let batch = match self.pending.next() {
            Some(b) => b,
            None => {
                self.epoch += 1;
                self.pending = epoch_batches(self.dataset.len(), self.batch_size, self.seed, self.epoch)
                    .ok()?
                    .into_iter();
                self.pending.next()?
            }
        };
        Some(
            batch
                .into_iter()
                .map(|(i, j)| MixturePair {
                    y1: self.dataset[i].pixels.clone(),
                    y2: self.dataset[j].pixels.clone(),
                    provenance: (i, j),
                })
                .collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::{Image, Shape};
    use proptest::prelude::*;

    fn dataset(n: usize) -> Vec<Mixture<f32>> {
        (0..n)
            .map(|i| Mixture {
                pixels: Image::filled(Shape::new(1, 1, 1), i as f32),
                ground_truth: None,
            })
            .collect()
    }

    #[test]
    fn four_mixtures_one_batch_of_two_pairs() {
        let b = epoch_batches(4, 2, 1, 0).unwrap();
        assert_eq!(b.len(), 1);
        assert_eq!(b[0].len(), 2);
        let mut seen: Vec<usize> = b[0].iter().flat_map(|&(i, j)| [i, j]).collect();
        seen.sort();
        assert_eq!(seen, vec![0, 1, 2, 3]);
    }

    #[test]
    fn odd_element_dropped() {
        assert_eq!(epoch_pairs(5, 3, 0).len(), 2);
    }

    #[test]
    fn zero_batch_size_is_config_error() {
        assert!(matches!(epoch_batches(4, 0, 1, 0), Err(Error::Config(_))));
        assert!(batch_pairs(&dataset(4), 0, 1).is_err());
    }

    #[test]
    fn stream_is_deterministic_and_reshuffles() {
        let d = dataset(10);
        let a: Vec<_> = batch_pairs(&d, 2, 9).unwrap().take(9).collect();
        let b: Vec<_> = batch_pairs(&d, 2, 9).unwrap().take(9).collect();
        assert_eq!(a, b);
        let e0: Vec<_> = a[..3].iter().flatten().map(|p| p.provenance).collect();
        let e1: Vec<_> = a[3..6].iter().flatten().map(|p| p.provenance).collect();
        assert_ne!(e0, e1);
        // pixels follow provenance
        for p in a.iter().flatten() {
            assert_eq!(p.y1.get(0, 0, 0), p.provenance.0 as f32);
        }
    }

    proptest! {
        #[test]
        fn each_index_at_most_once(len in 2usize..200, seed in any::<u64>(), epoch in 0u64..5) {
            let pairs = epoch_pairs(len, seed, epoch);
            prop_assert_eq!(pairs.len(), len / 2);
            let mut seen = vec![false; len];
            for (i, j) in pairs {
                prop_assert!(!seen[i] && !seen[j] && i != j);
                seen[i] = true;
                seen[j] = true;
            }
        }
    }
}
