//! Seed derivation.
//!
//! Every random decision in the toolkit is drawn from a `ChaCha8Rng` whose
//! seed is derived from the global seed plus a context tuple (epoch, batch,
//! view, clip path, ...). This keeps runs reproducible regardless of worker
//! scheduling and lets two processes agree on the exact same noise pairings.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer; good avalanche for combining seed components.
#[inline]
pub fn mix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Fold a tuple of integers into a single seed.
pub fn derive_seed(parts: &[u64]) -> u64 {
    let mut acc = 0x51a5_37a5_5a1e_ed01u64;
    for &p in parts {
        acc = mix64(acc ^ p);
    }
    acc
}

/// FNV-1a over bytes; stable forever, used to fold strings (clip paths,
/// noise source names) into seeds.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Deterministic stream for a context tuple.
pub fn rng_from(parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(parts))
}
