//! Stable seeding helpers.
//!
//! `std::hash` makes no cross-version guarantees, so every place that needs
//! "same seed + same key => same stream, forever, on any platform" routes
//! through this FNV-1a based mixer and a ChaCha generator.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a over a byte slice.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Mix a base seed with a string key (scene id, stratum name, ...).
pub fn mix_seed(seed: u64, key: &str) -> u64 {
    let mut buf = Vec::with_capacity(8 + key.len());
    buf.extend_from_slice(&seed.to_le_bytes());
    buf.extend_from_slice(key.as_bytes());
    fnv1a(&buf)
}

/// Mix a base seed with a string key and an index.
pub fn mix_seed_indexed(seed: u64, key: &str, index: u64) -> u64 {
    let mut buf = Vec::with_capacity(16 + key.len());
    buf.extend_from_slice(&seed.to_le_bytes());
    buf.extend_from_slice(key.as_bytes());
    buf.extend_from_slice(&index.to_le_bytes());
    fnv1a(&buf)
}

/// Deterministic generator for a mixed seed.
pub fn rng_for(seed: u64, key: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix_seed(seed, key))
}

/// Deterministic generator for a mixed seed plus index.
pub fn rng_for_indexed(seed: u64, key: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix_seed_indexed(seed, key, index))
}
