//! Seeded random streams. Every stochastic step in the crate draws from a
//! stream derived from a base seed and a purpose label, so that streams never
//! overlap and a run can be replayed from its seed alone.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Independent stream `id` of the generator seeded with `seed`.
pub fn stream(seed: u64, id: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Mixes a base seed with a list of labels into a new seed (splitmix64 finalizer).
pub fn derive(seed: u64, labels: &[u64]) -> u64 {
    let mut x = seed;
    for &l in labels {
        x = mix(x ^ mix(l.wrapping_add(0x9E37_79B9_7F4A_7C15)));
    }
    x
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream labels used across the crate.
pub mod purpose {
    pub const ENV: u64 = 1;
    pub const NOISE: u64 = 2;
    pub const BATCH: u64 = 3;
    pub const INIT: u64 = 4;
    pub const EVAL: u64 = 5;
    pub const GIBBS: u64 = 6;
}
