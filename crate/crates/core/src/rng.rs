//! Counter-based random streams.
//!
//! Every random quantity in a run is a pure function of `(seed, tag, i, j)`.
//! The key for a stream is built by folding each coordinate into a SplitMix64
//! finalizer:
//!
//! ```text
//! k0 = mix(seed + GOLDEN)
//! k1 = mix(k0 ^ tag * M1)
//! k2 = mix(k1 ^ i * M2)
//! k3 = mix(k2 ^ j * M3)
//! ```
//!
//! and a stream keyed by `k` emits `mix(k + (t + 1) * GOLDEN)` for
//! `t = 0, 1, ...`. This layout is part of the codebook contract: changing
//! it changes every generated code.

use rand_core::{impls, RngCore};

pub const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const M1: u64 = 0xD6E8_FEB8_6659_FD93;
const M2: u64 = 0xA076_1D64_78BD_642F;
const M3: u64 = 0xE703_7ED1_A0B4_28DB;

/// Stream purposes. The numeric values are frozen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Tag {
    Bias = 1,
    Bits = 2,
    Coalition = 3,
    Trial = 4,
    InnocentSample = 5,
}

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[inline]
pub fn key2(seed: u64, tag: Tag, i: u64) -> u64 {
    let k0 = mix64(seed.wrapping_add(GOLDEN));
    let k1 = mix64(k0 ^ (tag as u64).wrapping_mul(M1));
    mix64(k1 ^ i.wrapping_mul(M2))
}

/// Extends a `(seed, tag, i)` key with the second coordinate.
#[inline]
pub fn extend(k: u64, j: u64) -> u64 {
    mix64(k ^ j.wrapping_mul(M3))
}

#[inline]
pub fn key(seed: u64, tag: Tag, i: u64, j: u64) -> u64 {
    extend(key2(seed, tag, i), j)
}

/// Maps 64 random bits to a double in the open interval `(0, 1)`.
#[inline]
pub fn open01(x: u64) -> f64 {
    ((x >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
}

/// A random stream addressed by a derived key.
#[derive(Debug, Clone)]
pub struct StreamRng {
    key: u64,
    counter: u64,
}

impl StreamRng {
    pub fn from_key(key: u64) -> Self {
        StreamRng { key, counter: 0 }
    }

    pub fn new(seed: u64, tag: Tag, i: u64, j: u64) -> Self {
        Self::from_key(key(seed, tag, i, j))
    }

    #[inline]
    pub fn next_open01(&mut self) -> f64 {
        open01(self.next_u64())
    }
}

impl RngCore for StreamRng {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN)))
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        impls::fill_bytes_via_next(self, dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand_core::Error> {
        self.fill_bytes(dest);
        Ok(())
    }
}
