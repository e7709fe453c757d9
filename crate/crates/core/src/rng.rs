use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Reproducible random source. ChaCha8 gives the same stream on every platform
/// for a given seed.
#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Independent stream `stream` under the same seed. Used to give each test
    /// example its own generator so results do not depend on scheduling.
    pub fn for_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { seed, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform integer in `0..n`. Panics if `n == 0`.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    /// Uniform draw from `0..n` excluding `skip` (`skip < n`, `n >= 2`).
    pub fn below_except(&mut self, n: usize, skip: usize) -> usize {
        let r = self.below(n - 1);
        if r < skip {
            r
        } else {
            r + 1
        }
    }

    pub fn inner_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.inner
    }
}
