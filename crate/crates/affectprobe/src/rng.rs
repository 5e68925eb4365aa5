//! Seeded shuffling primitives shared by the split sampler and the
//! frame-order perturbation.
//!
//! Everything here is pinned so that splits and shuffles are reproducible
//! from a config snapshot alone:
//!
//! - PRNG family: ChaCha with 8 rounds (`rand_chacha::ChaCha8Rng`), keyed
//!   from a 64-bit seed via `rand_core`'s `seed_from_u64` (SplitMix64 key
//!   expansion).
//! - Shuffle: Fisher-Yates, iterating `i` from `len-1` down to `1`, swapping
//!   with `j = next_u64() mod (i + 1)`.
//! - Per-item seed derivation: 64-bit FNV-1a over the item id
//!   (offset 0xcbf29ce484222325, prime 0x100000001b3) XORed into the base
//!   seed.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// In-place Fisher-Yates shuffle with the pinned index rule.
pub fn fisher_yates<T>(items: &mut [T], rng: &mut ChaCha8Rng) {
    for i in (1..items.len()).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        items.swap(i, j);
    }
}

/// 64-bit FNV-1a hash.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Derive a per-item seed from a base seed and an item id.
pub fn derive_seed(base: u64, id: &str) -> u64 {
    base ^ fnv1a64(id.as_bytes())
}
