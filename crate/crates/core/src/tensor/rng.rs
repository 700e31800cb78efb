//! Seeded, seekable random stream.
//!
//! Draws are 64-bit words from ChaCha8 keyed by the little-endian bytes of the
//! seed (remaining key bytes zero) on a numbered stream. Position counts 64-bit
//! draws, so `(seed, stream, position)` identifies the next value on any
//! platform. Derived quantities use fixed conversions:
//!
//! - unit float: `(x >> 11) * 2^-53`, in `[0, 1)`;
//! - bounded integer in `0..n`: Lemire's multiply-shift with rejection;
//! - permutation: Fisher-Yates from the last index down.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{Error, Result};

pub const RNG_ALGORITHM: &str = "chacha8-le-seed/lemire/fisher-yates";

#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    position: u64,
    core: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    /// Independent sequence for the same seed, e.g. one for weights and one for
    /// batch order.
    pub fn with_stream(seed: u64, stream: u64) -> Self {
        Self::at(seed, stream, 0)
    }

    /// Stream positioned after `position` draws.
    pub fn at(seed: u64, stream: u64, position: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        let mut core = ChaCha8Rng::from_seed(key);
        core.set_stream(stream);
        core.set_word_pos(2 * position as u128);
        RngStream {
            seed,
            stream,
            position,
            core,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn position(&self) -> u64 {
        self.position
    }

    pub fn next_u64(&mut self) -> u64 {
        self.position += 1;
        self.core.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    pub fn next_unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..bound`. `bound` must be nonzero.
    pub fn next_below(&mut self, bound: u64) -> u64 {
        debug_assert!(bound > 0);
        let mut m = self.next_u64() as u128 * bound as u128;
        if (m as u64) < bound {
            let threshold = bound.wrapping_neg() % bound;
            while (m as u64) < threshold {
                m = self.next_u64() as u128 * bound as u128;
            }
        }
        (m >> 64) as u64
    }

    /// `count` draws in `[lo, hi)`.
    pub fn uniform(&mut self, count: usize, lo: f64, hi: f64) -> Result<Vec<f64>> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Range(format!("uniform bounds [{lo}, {hi})")));
        }
        let span = hi - lo;
        Ok((0..count)
            .map(|_| {
                let v = lo + span * self.next_unit();
                if v < hi {
                    v
                } else {
                    hi.next_down()
                }
            })
            .collect())
    }

    /// Uniformly random permutation of `0..n`.
    pub fn shuffled_indices(&mut self, n: usize) -> Result<Vec<usize>> {
        if n == 0 {
            return Err(Error::Range("cannot shuffle an empty index set".into()));
        }
        let mut idx: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = self.next_below(i as u64 + 1) as usize;
            idx.swap(i, j);
        }
        Ok(idx)
    }
}
