//! Reproducible random streams.
//!
//! A run owns a single master seed; every consumer (workload selection, noise
//! generation, slice drawing, sampling, ...) gets its own named stream so that
//! adding draws to one stage never perturbs another. Stream seeds are derived
//! with fixed integer arithmetic, so runs are reproducible bit-for-bit across
//! platforms.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// The concrete generator used for every stream.
pub type StreamRng = ChaCha12Rng;

/// Derives independent named random streams from one master seed.
#[derive(Debug, Clone, Copy)]
pub struct RngStreams {
    master: u64,
}

impl RngStreams {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    /// Returns the stream for `name`. The same `(master, name)` pair always
    /// yields an identical generator.
    pub fn stream(&self, name: &str) -> StreamRng {
        let mut state = self.master ^ fnv1a(name.as_bytes());
        let mut seed = [0u8; 32];
        for chunk in seed.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        StreamRng::from_seed(seed)
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
