//! Seeded random streams.
//!
//! Every stochastic routine takes a caller-owned [`SviRng`]. Independent
//! sub-streams are obtained with [`derive_seed`] or [`child`], so adding a
//! consumer never shifts the draws of another.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type SviRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SviRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 finalizer over `(seed, index)`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Fork an independent generator off `rng`.
pub fn child(rng: &mut SviRng) -> SviRng {
    ChaCha8Rng::seed_from_u64(rng.random())
}
