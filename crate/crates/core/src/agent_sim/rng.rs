//! Random streams for the agent-based layer.
//!
//! Every stream is a ChaCha8 generator (`rand_chacha`) whose 256-bit key is
//! filled by four successive SplitMix64 outputs of the 64-bit user seed.
//! Replicate streams are addressed by hashing `(base seed, gamma index,
//! replicate index)` through SplitMix64 as well, so streams are reproducible
//! on every platform and independent of scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// One SplitMix64 step: advances `state` and returns the mixed output.
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(GOLDEN);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rng_from_seed(seed: u64) -> SimRng {
    let mut state = seed;
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Derives a decorrelated seed from a base seed and a list of indices.
pub fn derive_seed(base: u64, indices: &[u64]) -> u64 {
    let mut state = base;
    let mut out = splitmix64(&mut state);
    for &i in indices {
        state ^= i.wrapping_mul(GOLDEN).rotate_left(17) ^ out;
        out = splitmix64(&mut state);
    }
    out
}
