//! Seeded random streams with label-keyed child derivation.
//!
//! Child streams are derived from `(seed, label)` only — never from how much of
//! the parent stream has been consumed — so per-task and per-round streams stay
//! reproducible regardless of execution order. Labels follow the convention
//! `"task:{t}"`, `"round:{n}"`, joined with `/` when nested.

use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;
const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

// SplitMix64 finalizer; used to spread seed material over the ChaCha key.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic random stream. Identical seed ⇒ identical sample stream.
#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        key[8..16].copy_from_slice(&mix(seed ^ GOLDEN_GAMMA).to_le_bytes());
        key[16..24].copy_from_slice(&mix(seed.wrapping_add(GOLDEN_GAMMA)).to_le_bytes());
        key[24..].copy_from_slice(&mix(!seed).to_le_bytes());
        Rng {
            seed,
            inner: ChaCha8Rng::from_seed(key),
        }
    }

    /// The seed this stream was created with.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent child stream keyed by `(seed, label)`.
    ///
    /// Derivation: `child_seed = mix(seed ^ fnv1a(label))`, where `mix` is the
    /// SplitMix64 finalizer. Deterministic and insensitive to parent state.
    pub fn derive_child(&self, label: &str) -> Rng {
        Rng::new(mix(self.seed ^ fnv1a(label.as_bytes())))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform draw from `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform index from `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        assert!(n > 0, "index bound must be positive");
        self.inner.random_range(0..n)
    }

    /// One draw from N(0, 1).
    pub fn standard_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }
}
