//! Counter-based random streams.
//!
//! A stream is identified by a 64-bit key `mix(seed, k)`. Its `i`-th output is
//! `finalize(key + (i + 1) * GOLDEN)`, so any draw can be recomputed from
//! `(seed, k, i)` alone. `finalize` is the SplitMix64 output function and
//! `mix(seed, k) = finalize(seed ^ finalize(k + GOLDEN))`.
//!
//! Monte Carlo replication `r` draws its design from stream `2r` and its noise
//! from stream `2r + 1`.

use rand::{Error as RandError, RngCore};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
#[inline]
pub fn finalize(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the key of stream `k` from a master seed.
#[inline]
pub fn mix(seed: u64, k: u64) -> u64 {
    finalize(seed ^ finalize(k.wrapping_add(GOLDEN)))
}

/// Key of the design stream of replication `rep`.
pub fn design_stream(seed: u64, rep: u64) -> u64 {
    mix(seed, 2 * rep)
}

/// Key of the noise stream of replication `rep`.
pub fn noise_stream(seed: u64, rep: u64) -> u64 {
    mix(seed, 2 * rep + 1)
}

#[derive(Debug, Clone)]
pub struct StreamRng {
    key: u64,
    counter: u64,
}

impl StreamRng {
    pub fn new(key: u64) -> Self {
        Self { key, counter: 0 }
    }

    pub fn from_seed_stream(seed: u64, k: u64) -> Self {
        Self::new(mix(seed, k))
    }

    /// Uniform deviate on [0, 1) with 53 random bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

impl RngCore for StreamRng {
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        finalize(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN)))
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        for chunk in dest.chunks_mut(8) {
            let bytes = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), RandError> {
        self.fill_bytes(dest);
        Ok(())
    }
}
