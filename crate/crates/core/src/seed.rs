//! Stable hashing and seeded RNG construction.
//!
//! Everything random in the pipeline flows from a `u64` seed through
//! [`derive_seed`], so parallel execution order never changes results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a. Platform independent.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    fnv1a64_from(FNV_OFFSET, bytes)
}

fn fnv1a64_from(mut hash: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

/// Mixes a base seed with a sequence of labels (`seed ⊕ hash(parts)`).
pub fn derive_seed(seed: u64, parts: &[&str]) -> u64 {
    let mut h = FNV_OFFSET;
    for p in parts {
        h = fnv1a64_from(h, p.as_bytes());
        h = fnv1a64_from(h, &[0xff]);
    }
    seed ^ h
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
