//! Reproducible random streams.
//!
//! Every trajectory (or sweep point) draws from its own ChaCha8 stream,
//! selected by `(master_seed, index)`. Within a stream the draws are
//! consumed in step order, so results never depend on scheduling.

use rand_chacha::rand_core::SeedableRng;
pub use rand_chacha::ChaCha8Rng;

/// The independent stream number `index` of `master_seed`.
pub fn stream(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// Derive a new master seed for a sub-experiment (e.g. a sweep point), so
/// that its trajectory streams do not collide with the parent's.
pub fn derive_seed(master_seed: u64, index: u64) -> u64 {
    // splitmix64 finalizer over the pair
    let mut z = master_seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
