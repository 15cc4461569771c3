use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::matrix::DenseMatrix;

/// Seeded, platform-independent random stream (ChaCha8).
///
/// Streams are addressed by a base seed plus an optional key path, so that
/// independent consumers (SGD order, subsampling, per-checkpoint noise) never
/// share state and results do not depend on call interleaving.
#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds `keys` into `seed`. Order-sensitive.
pub fn mix_seed(seed: u64, keys: &[u64]) -> u64 {
    keys.iter()
        .fold(splitmix64(seed), |acc, &k| splitmix64(acc ^ splitmix64(k)))
}

/// Content hash of a sample's bit pattern; equal rows hash equal.
pub fn sample_key(sample: &[f64]) -> u64 {
    sample
        .iter()
        .fold(0xCBF2_9CE4_8422_2325u64, |acc, v| {
            splitmix64(acc ^ v.to_bits())
        })
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        let mut key = [0u8; 32];
        for (i, chunk) in key.chunks_exact_mut(8).enumerate() {
            chunk.copy_from_slice(&splitmix64(seed.wrapping_add(i as u64)).to_le_bytes());
        }
        Rng {
            seed,
            inner: ChaCha8Rng::from_seed(key),
        }
    }

    /// Independent stream for `(seed, keys...)`.
    pub fn keyed(seed: u64, keys: &[u64]) -> Self {
        Rng::new(mix_seed(seed, keys))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform in `[low, high)`.
    pub fn uniform_range(&mut self, low: f64, high: f64) -> f64 {
        low + (high - low) * self.uniform()
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    pub fn fill_standard_normal(&mut self, out: &mut [f64]) {
        for v in out {
            *v = StandardNormal.sample(&mut self.inner);
        }
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.inner);
    }

    /// `amount` distinct indices from `0..len`, uniformly without replacement.
    pub fn sample_indices(&mut self, len: usize, amount: usize) -> Vec<usize> {
        rand::seq::index::sample(&mut self.inner, len, amount).into_vec()
    }
}

/// Matrix of i.i.d. standard-normal draws.
pub fn gaussian_sample(rng: &mut Rng, rows: usize, cols: usize) -> DenseMatrix {
    let mut m = DenseMatrix::zeros(rows, cols);
    for i in 0..rows {
        rng.fill_standard_normal(m.row_mut(i));
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_matrix() {
        let a = gaussian_sample(&mut Rng::new(7), 5, 3);
        let b = gaussian_sample(&mut Rng::new(7), 5, 3);
        assert_eq!(a, b);
        let c = gaussian_sample(&mut Rng::new(8), 5, 3);
        assert_ne!(a, c);
    }

    #[test]
    fn empty_shape() {
        let m = gaussian_sample(&mut Rng::new(1), 0, 4);
        assert_eq!((m.rows(), m.cols()), (0, 4));
        assert!(m.as_slice().is_empty());
    }

    #[test]
    fn million_draws_moments() {
        let mut rng = Rng::new(2024);
        let n = 1_000_000;
        let m = gaussian_sample(&mut rng, n, 1);
        let mean = m.as_slice().iter().sum::<f64>() / n as f64;
        let var = m
            .as_slice()
            .iter()
            .map(|v| (v - mean) * (v - mean))
            .sum::<f64>()
            / (n as f64 - 1.0);
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!(var > 0.99 && var < 1.01, "var {var}");
    }

    #[test]
    fn keyed_streams_differ_by_key_order() {
        assert_ne!(mix_seed(1, &[2, 3]), mix_seed(1, &[3, 2]));
        let mut a = Rng::keyed(1, &[2, 3]);
        let mut b = Rng::keyed(1, &[2, 3]);
        assert_eq!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn sample_key_is_content_based() {
        assert_eq!(sample_key(&[1.0, 2.0]), sample_key(&[1.0, 2.0]));
        assert_ne!(sample_key(&[1.0, 2.0]), sample_key(&[2.0, 1.0]));
    }

    #[test]
    fn sample_indices_distinct() {
        let mut rng = Rng::new(3);
        let mut idx = rng.sample_indices(50, 20);
        idx.sort_unstable();
        idx.dedup();
        assert_eq!(idx.len(), 20);
        assert!(idx.iter().all(|&i| i < 50));
    }
}
