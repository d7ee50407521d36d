//! Seed derivation and counter-based Gaussian sampling.
//!
//! Noise synthesis draws one normal variate per (seed, pixel index) pair, so
//! results do not depend on iteration order and per-pixel work can be
//! parallelized or regenerated for a sub-region without replaying a stream.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer; full-avalanche 64-bit mix.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent child seed from a parent seed and one tag word.
#[inline]
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    mix64(seed ^ mix64(tag.wrapping_add(GOLDEN)))
}

/// Two-word variant for (unit, slot) style streams.
#[inline]
pub fn derive_seed2(seed: u64, a: u64, b: u64) -> u64 {
    derive_seed(derive_seed(seed, a), b)
}

#[inline]
fn splitmix_next(state: &mut u64) -> u64 {
    *state = state.wrapping_add(GOLDEN);
    mix64(*state)
}

/// Uniform in (0, 1]; the low 11 bits are discarded so the mantissa is exact.
#[inline]
fn unit_open(x: u64) -> f64 {
    ((x >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform in [0, 1).
#[inline]
fn unit_half_open(x: u64) -> f64 {
    (x >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal variate addressed by (seed, index) via Box-Muller.
#[inline]
pub fn normal_at(seed: u64, index: u64) -> f64 {
    let mut state = derive_seed(seed, index);
    let u1 = unit_open(splitmix_next(&mut state));
    let u2 = unit_half_open(splitmix_next(&mut state));
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
