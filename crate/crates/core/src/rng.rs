//! Seed plumbing. Every random draw in the crate comes from a ChaCha8
//! stream whose seed is derived from the run seed and a purpose tag.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Purpose tags, so that streams for different uses never collide.
pub mod tag {
    pub const CLASS_ORDER: u64 = 1;
    pub const EPOCH_SHUFFLE: u64 = 2;
    pub const KMEANS: u64 = 3;
    pub const RANDOM_EXAMPLES: u64 = 4;
    pub const SYNTHETIC: u64 = 5;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a base seed with a tag and an index into an independent seed.
pub fn derive_seed(base: u64, tag: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(base) ^ tag) ^ index)
}

pub fn rng_for(base: u64, tag: u64, index: u64) -> Rng {
    Rng::seed_from_u64(derive_seed(base, tag, index))
}
