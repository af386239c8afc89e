//! Index-keyed random streams.
//!
//! Every random draw in a run comes from a stream keyed by
//! `(run seed, purpose, iteration, index)`. Streams are independent ChaCha8
//! generators whose 256-bit seed is expanded from the key with SplitMix64, so
//! a particle's randomness never depends on how work is scheduled across
//! threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// What a stream is used for; keeps streams of different stages disjoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Prior = 1,
    Rejection = 2,
    Resample = 3,
    Move = 4,
    Duplicate = 5,
    Synthetic = 6,
    Stratified = 7,
    Test = 8,
}

fn splitmix(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Factory for the streams of one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamFactory {
    seed: u64,
}

impl StreamFactory {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self, purpose: Purpose, iteration: u64, index: u64) -> Stream {
        let mut state = self.seed;
        let mut mix = splitmix(&mut state);
        for word in [purpose as u64, iteration, index] {
            state ^= word.wrapping_mul(0xD6E8_FEB8_6659_FD93) ^ mix;
            mix = splitmix(&mut state);
        }
        let mut key = [0u8; 32];
        for chunk in key.chunks_mut(8) {
            chunk.copy_from_slice(&splitmix(&mut state).to_le_bytes());
        }
        ChaCha8Rng::from_seed(key)
    }
}
