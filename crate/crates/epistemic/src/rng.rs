//! Deterministic random streams shared by every randomized component.
//!
//! All randomness in this crate flows through [`Stream`], a thin wrapper
//! around the ChaCha8 block cipher in counter mode. The construction is
//! pinned so that fixtures can be regenerated bit-identically by other
//! implementations:
//!
//! * Key: the 64-bit seed stored little-endian in bytes 0..8 of the
//!   256-bit ChaCha key, remaining bytes zero. Stream id and block
//!   counter start at zero.
//! * Raw output: 64-bit words in `rand_chacha`'s order (two consecutive
//!   little-endian 32-bit keystream words, low word first).
//! * `uniform01`: take the top 53 bits of a raw word,
//!   `(w >> 11) as f64 * 2^-53`, giving a value in `[0, 1)`.
//! * `normal`: one Box-Muller evaluation per call, consuming exactly two
//!   raw words: `sqrt(-2 ln(1 - u1)) * cos(2 pi u2)`. The second
//!   Box-Muller output is discarded.
//!
//! Derived seeds (per chain, per Gram entry, ...) come from
//! [`derive_seed`], a splitmix64 chain over the base seed and a list of
//! integer tags. Consumers must never share a `Stream` across parallel
//! work items; they derive one stream per item instead, which keeps
//! results independent of scheduling.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TWO_PI: f64 = std::f64::consts::TAU;

/// A seeded, counter-based random stream (ChaCha8, version 1 layout).
#[derive(Clone, Debug)]
pub struct Stream {
    rng: ChaCha8Rng,
}

impl Stream {
    pub fn new(seed: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        Stream {
            rng: ChaCha8Rng::from_seed(key),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform draw in `[0, 1)` with 53-bit resolution.
    pub fn uniform01(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform01()
    }

    /// Standard normal draw via Box-Muller (consumes two raw words).
    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform01();
        let u2 = self.uniform01();
        (-2.0 * (1.0 - u1).ln()).sqrt() * (TWO_PI * u2).cos()
    }

    /// Normal draw with the given mean and standard deviation.
    pub fn normal_scaled(&mut self, mean: f64, sd: f64) -> f64 {
        mean + sd * self.normal()
    }
}

fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministically derive a child seed from a base seed and integer tags.
///
/// `derive_seed(s, &[a, b])` = `m(m(m(s)) ^ a) ^ b)` with `m` = splitmix64.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    let mut s = splitmix64(base);
    for &t in tags {
        s = splitmix64(s ^ t);
    }
    s
}

/// FNV-1a hash of a matrix's raw f64 bits; used for provenance records.
pub fn hash_f64s<'a, I: IntoIterator<Item = &'a f64>>(values: I) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for v in values {
        for byte in v.to_bits().to_le_bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01B3);
        }
    }
    h
}
