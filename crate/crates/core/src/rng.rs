//! Deterministic random streams.
//!
//! Every stochastic step in the toolkit draws from [`SimRng`], which is
//! ChaCha with 8 rounds seeded through `SeedableRng::seed_from_u64`. The
//! ChaCha block function is specified bit-for-bit and independent of
//! platform endianness and word size, so a seed fully determines the stream.
//!
//! Streams are single-owner. Work that fans out (per instance, per frame)
//! derives child seeds with [`child_seed`] instead of sharing one stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The toolkit-wide random stream type.
pub type SimRng = ChaCha8Rng;

/// Creates the deterministic stream for `seed`.
pub fn seeded_rng(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent child seed from a parent seed and a lane index.
///
/// Uses the SplitMix64 finalizer over `parent ^ golden * (index + 1)`, so
/// distinct indices map to well-separated seeds and the mapping is stable.
pub fn child_seed(parent: u64, index: u64) -> u64 {
    let mut z = parent ^ 0x9E37_79B9_7F4A_7C15u64.wrapping_mul(index.wrapping_add(1));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
