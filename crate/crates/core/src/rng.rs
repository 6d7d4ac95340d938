//! Deterministic, platform-independent randomness.
//!
//! Everything random in this crate is derived from [`SplitMix64`] streams
//! keyed by [`mix`], so a `(subject, seed)` pair determines a surrogate's
//! trajectory bit for bit on every platform.

use serde::{Deserialize, Serialize};

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// The SplitMix64 output finalizer. A bijection on `u64`.
#[inline]
pub fn finalize(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Combines a key into a hash state.
#[inline]
pub fn mix(state: u64, key: u64) -> u64 {
    finalize(state.wrapping_add(GAMMA).wrapping_add(finalize(key ^ 0x5851_F42D_4C95_7F2D)))
}

/// FNV-1a over bytes, used to turn identifiers into stream keys.
pub fn hash_str(s: &str) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for b in s.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// Counter-based SplitMix64 generator.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    /// Independent stream for a named purpose.
    pub fn stream(seed: u64, purpose: &str) -> Self {
        Self::new(mix(seed, hash_str(purpose)))
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GAMMA);
        finalize(self.state)
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[0, bound)`; `bound` must be positive.
    #[inline]
    pub fn below(&mut self, bound: u64) -> u64 {
        debug_assert!(bound > 0);
        // Lemire's multiply-shift with rejection
        let threshold = bound.wrapping_neg() % bound;
        loop {
            let m = self.next_u64() as u128 * bound as u128;
            if (m as u64) >= threshold {
                return (m >> 64) as u64;
            }
        }
    }

    #[inline]
    pub fn index(&mut self, len: usize) -> usize {
        self.below(len as u64) as usize
    }

    #[inline]
    pub fn chance(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.index(i + 1);
            items.swap(i, j);
        }
    }
}

/// Derives instance seeds from `(master seed, subject, repetition, slot)`.
///
/// Distinct slots of the same repetition always receive distinct seeds:
/// slot seeds are the finalizer applied to an arithmetic progression with
/// odd stride, and the finalizer is a bijection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedSource {
    pub master: u64,
}

impl SeedSource {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    pub fn seed(&self, subject: &str, repetition: u32, slot: u32) -> u64 {
        let base = mix(mix(self.master, hash_str(subject)), repetition as u64);
        finalize(base.wrapping_add((slot as u64).wrapping_mul(GAMMA)))
    }

    /// Seeds for slots `0..n`.
    pub fn seeds(&self, subject: &str, repetition: u32, n: u32) -> Vec<u64> {
        (0..n).map(|slot| self.seed(subject, repetition, slot)).collect()
    }
}
