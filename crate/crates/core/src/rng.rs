//! Counter-style random streams.
//!
//! Every block of noise in the crate is addressed by a
//! `(master, experiment, replicate, layer)` tuple. The tuple is mixed into a
//! 256-bit ChaCha key, so a stream can be regenerated independently of how
//! many other streams were consumed before it or on which thread.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub type StreamRng = ChaCha8Rng;

/// Layer index reserved for input adaptation layers.
pub const INPUT_LAYER: u64 = u64::MAX;
/// Layer index reserved for output adaptation layers.
pub const OUTPUT_LAYER: u64 = u64::MAX - 1;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stable 64-bit id for a human-readable experiment name (FNV-1a).
pub fn experiment_id(name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master: u64,
    pub experiment: u64,
    pub replicate: u64,
    pub layer: u64,
}

impl SeedSpec {
    pub fn new(master: u64) -> Self {
        SeedSpec {
            master,
            experiment: 0,
            replicate: 0,
            layer: 0,
        }
    }

    pub fn with_experiment(self, experiment: u64) -> Self {
        SeedSpec { experiment, ..self }
    }

    pub fn with_replicate(self, replicate: u64) -> Self {
        SeedSpec { replicate, ..self }
    }

    pub fn with_layer(self, layer: u64) -> Self {
        SeedSpec { layer, ..self }
    }

    fn key(&self) -> [u8; 32] {
        let mut state = splitmix64(self.master);
        let mut key = [0u8; 32];
        let words = [self.experiment, self.replicate, self.layer, 0x5eed];
        for (chunk, w) in key.chunks_exact_mut(8).zip(words) {
            state = splitmix64(state ^ splitmix64(w));
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        key
    }

    pub fn rng(&self) -> StreamRng {
        ChaCha8Rng::from_seed(self.key())
    }
}

/// Fills `out` with i.i.d. standard normal draws.
#[inline]
pub fn fill_normal(rng: &mut StreamRng, out: &mut [f64]) {
    for v in out {
        *v = StandardNormal.sample(rng);
    }
}

#[inline]
pub fn normal(rng: &mut StreamRng) -> f64 {
    StandardNormal.sample(rng)
}
