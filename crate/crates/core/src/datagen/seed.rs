use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

// splitmix64 finalizer
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Order-sensitive hash of seed components.
pub fn mix_seed(parts: &[u64]) -> u64 {
    parts.iter().fold(0x5EED_u64, |acc, &p| mix(acc ^ mix(p)))
}

/// Independent generator for one purpose within a replication.
pub fn stream(seed: u64, replication: u64, tag: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix_seed(&[seed, replication, tag]))
}

// Stream tags.
pub(crate) const COVARIATES: u64 = 1;
pub(crate) const BETA: u64 = 2;
pub(crate) const OUTCOMES: u64 = 3;
pub(crate) const SPLIT: u64 = 4;
pub(crate) const TOPICS: u64 = 5;
