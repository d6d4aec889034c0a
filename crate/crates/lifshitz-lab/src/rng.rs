//! Deterministic per-sample random streams.
//!
//! Every Monte Carlo sample gets its own ChaCha8 stream keyed by
//! `(base_seed, sample_index)` through a splitmix64 scramble, so results are
//! independent of thread count and replay bit-identically from the seed
//! recorded in run reports.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 step: scrambles `state` into a well-mixed 64-bit word.
fn splitmix64(state: &mut u64) {
    *state = state.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    *state = z ^ (z >> 31);
}

/// Derive a full 256-bit ChaCha8 key from `(base_seed, stream)`.
///
/// Distinct `(base_seed, stream)` pairs give statistically independent
/// generators; the same pair always gives the same stream.
pub fn stream_rng(base_seed: u64, stream: u64) -> ChaCha8Rng {
    let mut state = base_seed ^ stream.wrapping_mul(0xd1342543de82ef95);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        splitmix64(&mut state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
