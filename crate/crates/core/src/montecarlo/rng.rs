//! Per-replication random streams.
//!
//! Each replication owns a ChaCha20 stream selected by `(seed, rep)`: the
//! key is derived from `seed`, the 64-bit stream id is the replication index.
//! Output depends only on that pair, never on thread scheduling.

use num_complex::Complex64;
use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};

use crate::stats::normal_quantile;

const TWO_POW_53: f64 = 9_007_199_254_740_992.0;

pub struct ReplicationStream {
    rng: ChaCha20Rng,
}

impl ReplicationStream {
    pub fn new(seed: u64, rep: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(rep);
        Self { rng }
    }

    /// Uniform on the open interval (0, 1), 53-bit resolution.
    pub fn next_uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) / TWO_POW_53
    }

    /// Standard normal by inverse-CDF transform; exactly one uniform per draw.
    pub fn next_normal(&mut self) -> f64 {
        normal_quantile(self.next_uniform())
    }

    /// Circular complex Gaussian with `E|z|² = 1`.
    pub fn next_complex_gaussian(&mut self) -> Complex64 {
        let re = self.next_normal();
        let im = self.next_normal();
        Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    }
}
