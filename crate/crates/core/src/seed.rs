//! Stable seed derivation.
//!
//! Every randomized operation takes an explicit `u64` seed. Sub-streams (per
//! fold, per target, per member) are derived with a splitmix64 step over the
//! parent seed mixed with a stable FNV-1a hash of a label, so results never
//! depend on `HashMap` iteration order or the platform hasher.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(label: &str) -> u64 {
    label
        .bytes()
        .fold(FNV_OFFSET, |h, b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from `seed` and a textual label.
pub fn derive(seed: u64, label: &str) -> u64 {
    splitmix64(seed ^ fnv1a(label))
}

/// Derive a child seed from `seed`, a label and an index.
pub fn derive_indexed(seed: u64, label: &str, index: usize) -> u64 {
    splitmix64(derive(seed, label) ^ (index as u64).wrapping_mul(FNV_PRIME))
}

/// The RNG used everywhere in the crate.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
