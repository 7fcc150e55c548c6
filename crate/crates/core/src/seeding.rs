//! Deterministic seed derivation.
//!
//! Every random stream in the crate is keyed by a 64-bit seed derived from a
//! master seed and a short path of integers (n, trial, run, ...). The mixer is
//! SplitMix64, so derived seeds are stable across platforms and releases.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The project-wide RNG. ChaCha is portable and reproducible bit-for-bit.
pub type LabRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hash a master seed together with a path of integers into a child seed.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(master), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn rng_from(seed: u64) -> LabRng {
    LabRng::seed_from_u64(seed)
}
