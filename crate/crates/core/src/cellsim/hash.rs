//! Stateless hashing for randomness that must not depend on draw order
//! (spatial shadowing, per-TTI activity of background users).

/// SplitMix64 finalizer.
#[inline]
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[inline]
pub fn hash2(key: u64, a: u64) -> u64 {
    mix(key ^ mix(a))
}

/// Uniform in [0, 1).
#[inline]
pub fn hash_uniform(key: u64, a: u64) -> f64 {
    (hash2(key, a) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal via Box–Muller.
pub fn hash_normal(key: u64, a: u64) -> f64 {
    let u1 = 1.0 - hash_uniform(key, a.wrapping_mul(2));
    let u2 = hash_uniform(key, a.wrapping_mul(2).wrapping_add(1));
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
