//! Counter-based bit mixing.
//!
//! Every random quantity in the crate is a pure function of a 64-bit seed and
//! an integer key, so results never depend on evaluation order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer.
#[inline(always)]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Absorbs one word into a running hash state.
#[inline(always)]
pub fn absorb(state: u64, word: u64) -> u64 {
    splitmix64(state ^ word.wrapping_mul(0xd6e8_feb8_6659_fd93))
}

/// Hash of a space-time site `(t, x)` under `seed`.
///
/// Coordinates are absorbed in order, so a caller may absorb a prefix once and
/// finish many sites along the last axis (see [`site_prefix`]).
#[inline]
pub fn hash_site(seed: u64, t: u64, x: &[i64]) -> u64 {
    let mut h = site_prefix(seed, t, &x[..x.len() - 1]);
    h = absorb(h, x[x.len() - 1] as u64);
    h
}

#[inline]
pub fn site_prefix(seed: u64, t: u64, prefix: &[i64]) -> u64 {
    let mut h = absorb(splitmix64(seed), t);
    for &c in prefix {
        h = absorb(h, c as u64);
    }
    h
}

/// Maps 64 random bits to a uniform in the open interval (0, 1).
#[inline(always)]
pub fn unit_open(bits: u64) -> f64 {
    ((bits >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
}

/// Seed for an independent stream `stream` derived from `seed`.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    absorb(absorb(splitmix64(seed ^ 0x5851_f42d_4c95_7f2d), stream), 0x2545_f491)
}

/// Deterministic generator for replicate `replicate`, role `role`.
pub fn stream_rng(seed: u64, replicate: u64, role: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(absorb(derive_seed(seed, replicate), role))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prefix_composition_matches_full_hash() {
        let x = [3i64, -7, 11];
        let h = absorb(site_prefix(42, 5, &x[..2]), x[2] as u64);
        assert_eq!(h, hash_site(42, 5, &x));
    }

    #[test]
    fn unit_open_stays_inside_interval() {
        assert!(unit_open(0) > 0.0);
        assert!(unit_open(u64::MAX) < 1.0);
    }

    #[test]
    fn neighbouring_sites_do_not_collide() {
        let mut seen = std::collections::HashSet::new();
        for t in 1..20u64 {
            for a in -10..10i64 {
                for b in -10..10i64 {
                    assert!(seen.insert(hash_site(7, t, &[a, b, 0])));
                }
            }
        }
    }
}
