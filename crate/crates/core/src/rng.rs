//! Counter-based randomness.
//!
//! Every random quantity in the library is a pure function of a 64-bit key,
//! so the value drawn for a bridge node or a Monte Carlo replica never depends
//! on how many draws happened before it or on which thread asked for it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;
const LEVEL_MUL: u64 = 0xd6e8_feb8_6659_fd93;
const INDEX_MUL: u64 = 0xa076_1d64_78bd_642f;
const COORD_MUL: u64 = 0xe703_7ed1_a0b4_28db;
const STREAM_A: u64 = 0x8ebc_6af0_9c88_c6e3;
const STREAM_B: u64 = 0x5899_65cc_7537_4cc3;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent child seed, e.g. replica `i` of a run seeded with `base`.
#[inline]
pub fn derive_seed(base: u64, child: u64) -> u64 {
    mix64(mix64(base.wrapping_add(GOLDEN)) ^ child.wrapping_mul(INDEX_MUL).wrapping_add(GOLDEN))
}

/// Key of one bridge node: (seed, level, index within level, coordinate).
#[inline]
pub fn node_key(seed: u64, level: u32, index: u64, coord: u32) -> u64 {
    let mut h = mix64(seed.wrapping_add(GOLDEN));
    h = mix64(h ^ (level as u64 + 1).wrapping_mul(LEVEL_MUL));
    h = mix64(h ^ index.wrapping_add(1).wrapping_mul(INDEX_MUL));
    mix64(h ^ (coord as u64 + 1).wrapping_mul(COORD_MUL))
}

#[inline]
fn unit_open_closed(bits: u64) -> f64 {
    // (0, 1]
    ((bits >> 11) as f64 + 1.0) * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal variate determined by `key` (Box-Muller, cosine branch).
#[inline]
pub fn normal_from_key(key: u64) -> f64 {
    let u1 = unit_open_closed(mix64(key ^ STREAM_A));
    let u2 = unit_open_closed(mix64(key ^ STREAM_B));
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// A conventional stream generator for auxiliary sampling (random partitions,
/// random starting functions). Seeded from a derived key.
pub fn stream_rng(seed: u64, purpose: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, purpose))
}
