//! Stable seed derivation.
//!
//! Every random stream in the toolkit is derived from one master seed by
//! mixing in integer coordinates or text labels. The mixing function is
//! SplitMix64 finalization, which is fixed across platforms and releases.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds `parts` into `base`, one SplitMix64 round per part.
pub fn derive(base: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(mix(base.wrapping_add(GOLDEN)), |acc, &p| {
        mix(acc.wrapping_add(GOLDEN) ^ mix(p.wrapping_add(GOLDEN)))
    })
}

/// 64-bit FNV-1a hash of `bytes`.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Derives a component seed from a master seed and a text label.
pub fn labeled(base: u64, label: &str) -> u64 {
    derive(base, &[fnv1a(label.as_bytes())])
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
