//! Counter-mode pseudorandomness.
//!
//! Every random quantity in this crate is a pure function of a seed and an
//! index: `noise(seed, n)` is the SplitMix64 finalizer applied to the n-th
//! counter state. Queries are order-independent and trivially parallel, and
//! a whole simulation is reproduced bit-for-bit from its master seed.

use crate::Rational;
use num::bigint::BigUint;
use num::{Signed, ToPrimitive};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const LANE_SALT: u64 = 0xD6E8_FEB8_6659_FD93;

/// SplitMix64 output for counter `index` of the stream started at `seed`.
#[inline]
pub fn noise(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent child seed (path seeds from a master seed,
/// per-block streams from a path seed). Domain-separated from `noise` so a
/// child stream never aliases its parent's bit stream.
#[inline]
pub fn split(seed: u64, lane: u64) -> u64 {
    noise(seed ^ LANE_SALT, lane)
}

/// Threshold `t` such that `noise(..) < t` is a Bernoulli(p) event up to a
/// one-part-in-2^64 rounding of `p` (t = floor(p * 2^64), saturating).
pub fn bernoulli_threshold(p: &Rational) -> u64 {
    assert!(!p.is_negative(), "p must be >= 0");
    let numer = p.numer().magnitude() * (BigUint::from(1u8) << 64);
    let t: BigUint = numer / p.denom().magnitude();
    t.to_u64().unwrap_or(u64::MAX)
}

/// Uniform in [0, 1) with 53 bits of precision.
#[inline]
pub fn unit_f64(u: u64) -> f64 {
    const DEN: f64 = (1u64 << 53) as f64;
    ((u >> 11) as f64) / DEN
}

/// Standard normal deviate from two independent words (Box-Muller).
pub fn standard_normal(u: u64, v: u64) -> f64 {
    let a = unit_f64(u).max(f64::MIN_POSITIVE);
    let b = unit_f64(v);
    (-2.0 * a.ln()).sqrt() * (2.0 * std::f64::consts::PI * b).cos()
}
