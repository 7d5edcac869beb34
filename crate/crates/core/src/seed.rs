//! Deterministic seed fan-out.
//!
//! Every run takes a single top-level `u64` seed. Components never share an
//! RNG stream; instead each derives its own seed as
//! `splitmix64(root + fnv1a64(tag))` where `tag` is a stable string such as
//! `"train/shuffle"` or `"synth/video/17"`. Tags namespace the streams, so
//! adding a consumer never perturbs existing ones, and per-item tags keep
//! parallel generation order-independent.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x1000_0000_01b3;

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Derive a component seed from the top-level seed and a stable tag.
pub fn derive_seed(root: u64, tag: &str) -> u64 {
    splitmix64(root.wrapping_add(fnv1a64(tag.as_bytes())))
}

/// ChaCha stream seeded by [`derive_seed`]; platform-stable.
pub fn rng_for(root: u64, tag: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, tag))
}
