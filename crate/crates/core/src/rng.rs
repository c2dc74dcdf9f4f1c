//! Seed handling shared by every randomized component.
//!
//! All randomness flows from a user seed through [`mix_seed`], so each
//! consumer (a row shuffle, a k-means restart, a training epoch) owns an
//! independent stream that is still reproducible from the one seed.

use rand::SeedableRng;
use rand_xoshiro::{SplitMix64, Xoshiro256PlusPlus};

/// SplitMix64 finalizer applied to `seed` combined with a stream index.
pub fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator used for per-record clause shuffles.
pub fn shuffle_rng(seed: u64, row: u64) -> SplitMix64 {
    SplitMix64::seed_from_u64(mix_seed(seed, row))
}

/// General purpose generator for stream `stream` of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> Xoshiro256PlusPlus {
    Xoshiro256PlusPlus::seed_from_u64(mix_seed(seed, stream))
}
