//! Seeded randomness.
//!
//! Every randomized operation draws from ChaCha8 (`rand_chacha::ChaCha8Rng`),
//! a counter-based stream cipher generator whose output is fully specified
//! and identical on every platform. Independent streams are derived from a
//! master seed with the SplitMix64 finalizer so that, e.g., tree `t` of a
//! forest or site `j` of a split never depends on how many draws another
//! stream consumed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 finalizer applied to `master ^ golden·(stream + 1)`.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Named sub-streams so call sites don't collide on small integers.
pub mod stream {
    pub const PARTITION: u64 = 0x5041_5254;
    pub const SPLIT: u64 = 0x5350_4c54;
    pub const FOREST: u64 = 0x464f_5253;
    pub const SYNTH: u64 = 0x5359_4e54;
}
