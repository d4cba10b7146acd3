//! Deterministic, platform-stable random number generation.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

/// The generator behind every stochastic step (fold shuffles, subsampling,
/// Monte Carlo draws).
pub type Rng64 = Xoshiro256PlusPlus;

/// xoshiro256++ seeded by expanding `seed` through SplitMix64.
pub fn rng_from_seed(seed: u64) -> Rng64 {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

/// Mixes a stream index into a seed so that related tasks (folds,
/// replicates, nested fits) get decorrelated generators.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
