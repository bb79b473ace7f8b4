//! Seeded randomness and mini-batch sampling.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stream ids used to split one user seed into independent generators.
pub mod streams {
    pub const PROBLEM: u64 = 0;
    pub const BATCHES: u64 = 1;
    pub const INIT: u64 = 2;
}

/// A seeded, exclusively owned random generator.
///
/// Backed by ChaCha8 so the same `(seed, stream)` pair yields the same
/// sequence on every platform.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        RngStream { seed, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    pub(crate) fn inner(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

/// Sorted set of distinct sample indices in `[0, N)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MiniBatch(Vec<usize>);

impl MiniBatch {
    /// Builds a batch from arbitrary indices, validating them against `n`.
    pub fn new(mut indices: Vec<usize>, n: usize) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::invalid("mini-batch must not be empty"));
        }
        indices.sort_unstable();
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("mini-batch contains duplicate indices"));
        }
        if let Some(&last) = indices.last() {
            if last >= n {
                return Err(Error::invalid(format!(
                    "index {last} out of range for {n} samples"
                )));
            }
        }
        Ok(MiniBatch(indices))
    }

    /// The whole data set `{0, …, n-1}`.
    pub fn full(n: usize) -> Self {
        MiniBatch((0..n).collect())
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Draws `b` distinct indices uniformly among all size-`b` subsets of `[0, n)`.
///
/// Successive calls are independent draws.
pub fn sample_minibatch(rng: &mut RngStream, n: usize, b: usize) -> Result<MiniBatch> {
    if b < 1 || b > n {
        return Err(Error::invalid(format!(
            "batch size {b} must lie in [1, {n}]"
        )));
    }
    if b == n {
        return Ok(MiniBatch::full(n));
    }
    let mut indices = index::sample(rng.inner(), n, b).into_vec();
    indices.sort_unstable();
    Ok(MiniBatch(indices))
}

/// Standard-normal initial point drawn from the `INIT` stream of `seed`.
pub fn init_theta(seed: u64, dim: usize) -> crate::ParamVector {
    let mut rng = RngStream::with_stream(seed, streams::INIT);
    crate::ParamVector::from_vec((0..dim).map(|_| rng.standard_normal()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_batch_when_b_equals_n() {
        let mut rng = RngStream::new(7);
        let batch = sample_minibatch(&mut rng, 5, 5).unwrap();
        assert_eq!(batch.indices(), &[0, 1, 2, 3, 4]);
    }

    #[test]
    fn rejects_bad_sizes() {
        let mut rng = RngStream::new(7);
        assert!(matches!(
            sample_minibatch(&mut rng, 5, 0),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            sample_minibatch(&mut rng, 5, 6),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn same_seed_same_batches() {
        let mut a = RngStream::new(42);
        let mut b = RngStream::new(42);
        for _ in 0..3 {
            assert_eq!(
                sample_minibatch(&mut a, 500, 50).unwrap(),
                sample_minibatch(&mut b, 500, 50).unwrap()
            );
        }
    }

    #[test]
    fn batches_are_sorted_and_distinct() {
        let mut rng = RngStream::new(3);
        for _ in 0..100 {
            let batch = sample_minibatch(&mut rng, 20, 7).unwrap();
            assert_eq!(batch.len(), 7);
            assert!(batch.indices().windows(2).all(|w| w[0] < w[1]));
            assert!(batch.indices().iter().all(|&i| i < 20));
        }
    }

    #[test]
    fn singleton_frequencies_are_uniform() {
        let mut rng = RngStream::new(11);
        let draws = 100_000;
        let mut counts = [0usize; 4];
        for _ in 0..draws {
            counts[sample_minibatch(&mut rng, 4, 1).unwrap().indices()[0]] += 1;
        }
        let expected = draws as f64 / 4.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        // 3 degrees of freedom, 0.999 quantile
        assert!(chi2 < 16.27, "chi2 = {chi2}");
        for &c in &counts {
            assert!((c as f64 / draws as f64 - 0.25).abs() < 0.02);
        }
    }

    #[test]
    fn pairs_are_uniform_over_subsets() {
        // N=4, b=2 has 6 subsets; check each appears ~1/6 of the time.
        let mut rng = RngStream::new(5);
        let draws = 60_000;
        let mut counts = std::collections::HashMap::new();
        for _ in 0..draws {
            *counts
                .entry(sample_minibatch(&mut rng, 4, 2).unwrap())
                .or_insert(0usize) += 1;
        }
        assert_eq!(counts.len(), 6);
        let expected = draws as f64 / 6.0;
        let chi2: f64 = counts
            .values()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        // 5 degrees of freedom, 0.999 quantile
        assert!(chi2 < 20.52, "chi2 = {chi2}");
    }

    #[test]
    fn minibatch_validation() {
        assert_eq!(MiniBatch::new(vec![3, 1], 4).unwrap().indices(), &[1, 3]);
        assert!(MiniBatch::new(vec![1, 1], 4).is_err());
        assert!(MiniBatch::new(vec![4], 4).is_err());
        assert!(MiniBatch::new(vec![], 4).is_err());
    }
}
