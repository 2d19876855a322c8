//! Counter-based random draws.
//!
//! Every Monte Carlo sample index `n` owns its own stream, keyed by
//! `(seed, n)`. The k-th variate of a stream is a pure function of
//! `(seed, n, k)`, so results do not depend on evaluation order or on how
//! the index range is split across workers. Re-opening the same stream at a
//! different parameter value yields common random numbers.

use statrs::function::erf::erfc_inv;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix64(mut x: u64) -> u64 {
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Identifies the stream of draws for one sample index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DrawSource {
    pub seed: u64,
    pub stream_index: u64,
}

impl DrawSource {
    pub fn new(seed: u64, stream_index: u64) -> Self {
        Self { seed, stream_index }
    }

    /// Opens the stream at its first variate.
    #[inline]
    pub fn stream(&self) -> DrawStream {
        let key = mix64(
            self.seed ^ mix64(self.stream_index.wrapping_mul(GOLDEN) ^ 0xD1B5_4A32_D192_ED03),
        );
        DrawStream { key, counter: 0 }
    }
}

/// Sequential variates of a single [`DrawSource`].
#[derive(Debug, Clone)]
pub struct DrawStream {
    key: u64,
    counter: u64,
}

impl DrawStream {
    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.counter += 1;
        mix64(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN)))
    }

    /// Uniform on the open interval (0, 1).
    #[inline]
    pub fn next_uniform(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal by inversion of one uniform.
    #[inline]
    pub fn next_normal(&mut self) -> f64 {
        standard_normal_quantile(self.next_uniform())
    }
}

/// Inverse of the standard normal CDF for `p` in (0, 1).
#[inline]
pub fn standard_normal_quantile(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
}
