//! Deterministic seed splitting.
//!
//! A [`StreamSeed`] names one random stream. Streams are derived from a
//! master seed by mixing in a purpose string and then an index (path, run,
//! batch). Each path gets its own generator keyed by its index, so results do
//! not depend on how work is partitioned across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used everywhere in the crate.
pub type SimRng = ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// 64-bit FNV-1a; stable across platforms and releases.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StreamSeed(u64);

impl StreamSeed {
    pub fn new(master: u64) -> Self {
        Self(splitmix64(master))
    }

    pub fn value(self) -> u64 {
        self.0
    }

    /// Sub-stream namespaced by a purpose string.
    pub fn derive(self, purpose: &str) -> Self {
        Self(splitmix64(self.0 ^ fnv1a(purpose.as_bytes())))
    }

    /// Sub-stream for the `index`-th item (path, run, batch).
    pub fn child(self, index: u64) -> Self {
        Self(splitmix64(splitmix64(self.0).wrapping_add(index)))
    }

    pub fn rng(self) -> SimRng {
        SimRng::seed_from_u64(self.0)
    }

    pub fn path_rng(self, index: u64) -> SimRng {
        self.child(index).rng()
    }
}
