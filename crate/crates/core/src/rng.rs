//! Deterministic random number generation.
//!
//! Everything random in this crate flows through ChaCha12 streams plus the
//! Box-Muller transform below, so datasets, codebooks, hyperplanes, and graph
//! layouts reproduce bit-for-bit across runs, thread counts, and platforms.
//!
//! Stream layout (part of the dataset file contract): the generator for one
//! logical object is `ChaCha12Rng::seed_from_u64(seed)` with
//! `set_stream(stream_id)`. Synthetic sequence data uses
//! `stream_id = (channel << 48) | position` with 1-based positions; targets for
//! trial `t` use position `L + 1 + t`. Derived seeds for sub-tasks (one k-means
//! run per subvector, say) come from [`derive_seed`], a SplitMix64 mix of the
//! base seed and two tags.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

/// Creates the deterministic generator for `(seed, stream_id)`.
pub fn stream_rng(seed: u64, stream_id: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}

/// Stream id for one `(channel, position)` cell of a synthetic dataset.
///
/// Positions are 1-based; target records for trial `t` pass `l + 1 + t`.
pub fn sequence_stream_id(channel: usize, position: usize) -> u64 {
    ((channel as u64) << 48) | position as u64
}

/// SplitMix64 mixing of a base seed with two tags, for per-task sub-seeds.
pub fn derive_seed(base: u64, tag_a: u64, tag_b: u64) -> u64 {
    let mut z = base
        .wrapping_add(tag_a.wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add(tag_b.wrapping_mul(0xbf58_476d_1ce4_e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Uniform draw in (0, 1], from the top 53 bits of one `u64`.
pub fn uniform_open01(rng: &mut impl RngCore) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 1.0) / (1u64 << 53) as f64
}

/// Uniform draw in [0, 1).
pub fn uniform_halfopen01(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

/// One Box-Muller pair of independent standard normals.
///
/// `z0 = sqrt(-2 ln u1) cos(2π u2)`, `z1 = sqrt(-2 ln u1) sin(2π u2)`, with
/// `u1, u2` uniform in (0, 1]. Two `u64` draws per pair, in a fixed order.
pub fn normal_pair(rng: &mut impl RngCore) -> (f64, f64) {
    let u1 = uniform_open01(rng);
    let u2 = uniform_open01(rng);
    let r = (-2.0 * u1.ln()).sqrt();
    let theta = 2.0 * std::f64::consts::PI * u2;
    (r * theta.cos(), r * theta.sin())
}

/// Fills `out` with draws from N(mu, sigma^2), consuming Box-Muller pairs in
/// order and discarding the trailing half pair when `out.len()` is odd.
pub fn fill_normal_f32(rng: &mut impl RngCore, mu: f64, sigma: f64, out: &mut [f32]) {
    let mut i = 0;
    while i < out.len() {
        let (z0, z1) = normal_pair(rng);
        out[i] = (mu + sigma * z0) as f32;
        if i + 1 < out.len() {
            out[i + 1] = (mu + sigma * z1) as f32;
        }
        i += 2;
    }
}

/// Uniform integer in [0, n), rejection-sampled to avoid modulo bias.
pub fn uniform_index(rng: &mut impl RngCore, n: usize) -> usize {
    assert!(n > 0);
    let n = n as u64;
    let zone = u64::MAX - (u64::MAX - n + 1) % n;
    loop {
        let v = rng.next_u64();
        if v <= zone {
            return (v % n) as usize;
        }
    }
}
