//! Seeded random streams for the simulator.
//!
//! All randomness flows through ChaCha8 streams (`RNG_NAME` is recorded in
//! output file metadata). Uniform doubles take the top 53 bits of a 64-bit
//! word, so a stream is fully determined by its seed and draw index.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Generator name written into output headers.
pub const RNG_NAME: &str = "chacha8";

/// SplitMix64 increment, used to derive independent stream seeds.
const SEED_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

pub(crate) fn stream(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Seed for frame `frame` of stream family `family` under a base seed.
///
/// Family 0 with the XOR convention (`seed ^ frame`) is the molecule
/// placement stream; higher families are decorrelated through SplitMix64
/// finalization so placement and noise never share a stream.
pub(crate) fn frame_seed(base: u64, frame: u64, family: u64) -> u64 {
    let raw = base ^ frame;
    if family == 0 {
        return raw;
    }
    splitmix64(raw.wrapping_add(family.wrapping_mul(SEED_GAMMA)))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(SEED_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform double in [0, 1): top 53 bits of one 64-bit draw.
pub(crate) fn u01(rng: &mut impl RngCore) -> f64 {
    const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
    (rng.next_u64() >> 11) as f64 * SCALE
}

/// Poisson draw with the given rate.
///
/// Inversion by sequential search below `PTRS_SWITCH`, Hormann's PTRS
/// transformed rejection above it. Both paths consume only `u01` draws.
pub(crate) fn poisson(rng: &mut impl RngCore, rate: f64) -> u64 {
    assert!(rate.is_finite() && rate >= 0.0, "poisson rate must be nonnegative");
    if rate == 0.0 {
        0
    } else if rate < PTRS_SWITCH {
        poisson_inversion(rng, rate)
    } else {
        poisson_ptrs(rng, rate)
    }
}

const PTRS_SWITCH: f64 = 30.0;

fn poisson_inversion(rng: &mut impl RngCore, rate: f64) -> u64 {
    let mut k = 0u64;
    let mut p = (-rate).exp();
    let mut cdf = p;
    let u = u01(rng);
    // The tail beyond ~rate + 40*sqrt(rate) is below 2^-53; the cap only
    // guards against pathological rounding.
    let cap = (rate + 40.0 * rate.sqrt() + 64.0) as u64;
    while u > cdf && k < cap {
        k += 1;
        p *= rate / k as f64;
        cdf += p;
    }
    k
}

/// PTRS constants follow Hormann, "The transformed rejection method for
/// generating Poisson random variables" (1993), valid for rate >= 10.
fn poisson_ptrs(rng: &mut impl RngCore, rate: f64) -> u64 {
    let b = 0.931 + 2.53 * rate.sqrt();
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let v_r = 0.9277 - 3.6224 / (b - 2.0);
    let log_rate = rate.ln();
    loop {
        let u = u01(rng) - 0.5;
        let v = u01(rng);
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + rate + 0.43).floor();
        if us >= 0.07 && v <= v_r {
            return k as u64;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        let lhs = (v * inv_alpha / (a / (us * us) + b)).ln();
        if lhs <= k * log_rate - rate - ln_factorial(k as u64) {
            return k as u64;
        }
    }
}

/// ln(k!) via a table for small k, Stirling's series beyond.
fn ln_factorial(k: u64) -> f64 {
    const TABLE: [f64; 10] = [
        0.0,
        0.0,
        0.693_147_180_559_945_3,
        1.791_759_469_228_055,
        3.178_053_830_347_945_8,
        4.787_491_742_782_046,
        6.579_251_212_010_101,
        8.525_161_361_065_415,
        10.604_602_902_745_25,
        12.801_827_480_081_469,
    ];
    if (k as usize) < TABLE.len() {
        return TABLE[k as usize];
    }
    let x = (k + 1) as f64;
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    (x - 0.5) * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI).ln()
        + inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 / 1260.0))
}
