//! Pinned pseudo-random streams.
//!
//! Every random quantity in the crate (reservoir angles, shot outcomes,
//! dataset sampling, splits) is drawn from xoshiro256** seeded through
//! SplitMix64, and converted to floats with the 53-bit rule below. Both
//! generators are short, public-domain algorithms, so a reservoir can be
//! regenerated bit-for-bit from `(seed, n_qubits, n_coords)` in any language.

use rand_xoshiro::rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;

pub type StreamRng = Xoshiro256StarStar;

const TWO_POW_M53: f64 = 1.0 / (1u64 << 53) as f64;

/// Generator for `seed`; state expanded from the seed with SplitMix64.
pub fn stream(seed: u64) -> StreamRng {
    Xoshiro256StarStar::seed_from_u64(seed)
}

/// Uniform on `[0, 1)`: top 53 bits of the next output times 2^-53.
pub fn unit_closed_open(rng: &mut StreamRng) -> f64 {
    (rng.next_u64() >> 11) as f64 * TWO_POW_M53
}

/// Uniform on the open interval `(0, 1)`: `(k + 1/2) * 2^-53` with `k` the top 53 bits.
pub fn unit_open(rng: &mut StreamRng) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * TWO_POW_M53
}

/// Uniform integer in `0..n` by the widening-multiply rule `(x * n) >> 64`.
pub fn below(rng: &mut StreamRng, n: usize) -> usize {
    debug_assert!(n > 0);
    ((rng.next_u64() as u128 * n as u128) >> 64) as usize
}

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Child seed for item `index` of a stream rooted at `base`.
///
/// Independent of evaluation order, so parallel workers reproduce the
/// sequential result.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    mix64(mix64(base.wrapping_add(0x9e37_79b9_7f4a_7c15)) ^ index.wrapping_mul(0xd1b5_4a32_d192_ed03))
}
