//! Deterministic stream derivation for parallel Monte Carlo.
//!
//! Every trajectory draws from its own counter-based ChaCha stream keyed by
//! `(master_seed, index)`, so results are bit-identical no matter how work is
//! scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent stream for one trajectory (or one sub-experiment).
pub fn trajectory_stream(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// Derives a child seed from a master seed and a tag (splitmix64 finalizer).
/// Used to give nested experiments (sweep cells, calibration repeats,
/// optimizer restarts) their own master seeds.
pub fn derive_seed(master_seed: u64, tag: u64) -> u64 {
    let mut z = master_seed
        .wrapping_add(0x9e3779b97f4a7c15)
        .wrapping_add(tag.wrapping_mul(0xbf58476d1ce4e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}
