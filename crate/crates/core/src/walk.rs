//! Simple symmetric random walks on `Z^d`: return probability, coincidence
//! counts of walk pairs, collision probabilities and a local CLT check.
//!
//! Walks are simulated literally, one walker at a time, but long stretches
//! during which a return or meeting is impossible are skipped exactly: when
//! two walkers are at L1 distance `D` they cannot meet within `(D - 1) / 2`
//! steps, so each walker's displacement over that stretch is drawn from its
//! exact law (a multinomial split across axes, then a binomial per axis).

use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::lattice::l1_norm;
use crate::mix;
use crate::stats::{RunStats, Welford};

/// Below this many steps a jump is taken one step at a time.
const SHORT_JUMP: u64 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WalkConfig {
    pub d: usize,
    pub horizon: u64,
    pub replicates: u64,
    pub seed: u64,
}

impl WalkConfig {
    pub fn new(d: usize, horizon: u64, replicates: u64, seed: u64) -> Result<Self> {
        let cfg = Self { d, horizon, replicates, seed };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d < 3 {
            return Err(invalid(format!("walk dimension must be at least 3, got {}", self.d)));
        }
        if self.horizon == 0 || self.replicates == 0 {
            return Err(invalid("walk horizon and replicate count must be positive"));
        }
        Ok(())
    }
}

/// One lattice walker with its own random stream.
struct Walker {
    pos: Vec<i64>,
    rng: ChaCha8Rng,
}

impl Walker {
    fn new(start: &[i64], rng: ChaCha8Rng) -> Self {
        Self { pos: start.to_vec(), rng }
    }

    fn step(&mut self) {
        let d = self.pos.len();
        let r = self.rng.random_range(0..2 * d);
        self.pos[r / 2] += if r % 2 == 0 { 1 } else { -1 };
    }

    /// Advances `k` steps, sampling the displacement from its exact law.
    fn jump(&mut self, k: u64) {
        if k <= SHORT_JUMP {
            for _ in 0..k {
                self.step();
            }
            return;
        }
        let d = self.pos.len();
        let mut left = k;
        for axis in 0..d {
            let n = match d - axis {
                1 => left,
                2 => binomial_half(&mut self.rng, left),
                rest => sample_binomial(&mut self.rng, left, 1.0 / rest as f64),
            };
            left -= n;
            let ups = binomial_half(&mut self.rng, n);
            self.pos[axis] += 2 * ups as i64 - n as i64;
        }
    }
}

fn sample_binomial(rng: &mut ChaCha8Rng, n: u64, p: f64) -> u64 {
    if n == 0 {
        return 0;
    }
    Binomial::new(n, p).expect("binomial parameters are valid").sample(rng)
}

/// `Bin(n, 1/2)`: a popcount of `n` fair bits for moderate `n`, which is
/// several times cheaper than the general sampler.
fn binomial_half(rng: &mut ChaCha8Rng, n: u64) -> u64 {
    if n > 2048 {
        return sample_binomial(rng, n, 0.5);
    }
    let mut left = n;
    let mut ones = 0u64;
    while left >= 64 {
        ones += rng.random::<u64>().count_ones() as u64;
        left -= 64;
    }
    if left > 0 {
        ones += (rng.random::<u64>() & ((1u64 << left) - 1)).count_ones() as u64;
    }
    ones
}

fn distance(a: &[i64], b: &[i64]) -> i64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Stream roles within a replicate.
const ROLE_FIRST: u64 = 0;
const ROLE_SECOND: u64 = 1;
const ROLE_SINGLE: u64 = 2;

/// Time of the first return to the start within `horizon`, if any.
fn first_return(d: usize, horizon: u64, rng: ChaCha8Rng) -> Option<u64> {
    let origin = vec![0i64; d];
    let mut w = Walker::new(&origin, rng);
    let mut t = 0u64;
    while t < horizon {
        let dist = l1_norm(&w.pos) as u64;
        if dist > horizon - t {
            return None;
        }
        let k = if dist >= 2 { (dist - 1).min(horizon - t) } else { 1 };
        if k == 1 {
            w.step();
        } else {
            w.jump(k);
        }
        t += k;
        if w.pos.iter().all(|&c| c == 0) {
            return Some(t);
        }
    }
    None
}

/// Monte Carlo return probability with a truncation bracket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhoEstimate {
    pub stats: RunStats,
    /// Additive upper bound on the mass of returns after the horizon.
    pub bracket: f64,
    /// Calibrated constant `c` of the tail model `c * n^{-d/2}`.
    pub tail_constant: f64,
    /// Empirical first-return mass per dyadic block `[2^j, 2^{j+1})`.
    pub block_mass: Vec<(u64, f64)>,
}

/// Fraction of walks that return to the origin within the horizon.
///
/// The tail constant is the largest ratio, over dyadic blocks of return
/// times, between the empirical first-return mass in the block and the
/// block's sum of `n^{-d/2}` over even `n`. Pooling per block keeps the
/// calibration from being driven by isolated single returns at large `n`.
pub fn rho_d(cfg: &WalkConfig) -> Result<RhoEstimate> {
    cfg.validate()?;
    let returns: Vec<Option<u64>> = (0..cfg.replicates)
        .into_par_iter()
        .map(|i| first_return(cfg.d, cfg.horizon, mix::stream_rng(cfg.seed, i, ROLE_SINGLE)))
        .collect();
    let stats = returns.iter().map(|r| r.is_some() as u8 as f64).collect::<Welford>().stats()?;

    let half_d = cfg.d as f64 / 2.0;
    let blocks = 64 - cfg.horizon.leading_zeros() as usize;
    let mut counts = vec![0u64; blocks];
    for n in returns.iter().flatten() {
        counts[63 - n.leading_zeros() as usize] += 1;
    }
    let mut block_mass = Vec::new();
    let mut tail_constant: f64 = 0.0;
    for (j, &c) in counts.iter().enumerate() {
        let lo = 1u64 << j;
        let hi = ((lo << 1) - 1).min(cfg.horizon);
        let weight: f64 = (lo..=hi).filter(|n| n % 2 == 0).map(|n| (n as f64).powf(-half_d)).sum();
        let mass = c as f64 / cfg.replicates as f64;
        block_mass.push((lo, mass));
        if weight > 0.0 {
            tail_constant = tail_constant.max(mass / weight);
        }
    }
    let bracket = tail_constant * even_tail_sum(cfg.horizon, half_d);
    Ok(RhoEstimate { stats, bracket, tail_constant, block_mass })
}

/// `sum_{n > T, n even} n^{-a}`, summed exactly up to a cutoff and then by the
/// Euler–Maclaurin integral for the remainder.
fn even_tail_sum(horizon: u64, a: f64) -> f64 {
    let first = horizon + 1 + (horizon + 1) % 2;
    let cutoff = first + 20_000;
    let mut s: f64 = (first..cutoff).step_by(2).map(|n| (n as f64).powf(-a)).sum();
    // Remaining even n >= cutoff: sum_{m >= cutoff/2} (2m)^{-a}.
    let m0 = (cutoff / 2) as f64;
    s += 2f64.powf(-a) * (m0.powf(1.0 - a) / (a - 1.0) + 0.5 * m0.powf(-a));
    s
}

/// Coincidence record of one pair of walks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntersectionSample {
    /// `N_t` for each requested horizon, in the order requested.
    pub counts: Vec<u64>,
    /// Whether the walks met at some time `0..=T`.
    pub hit: bool,
    pub first_meeting: Option<u64>,
}

fn simulate_pair(
    horizons: &[u64],
    start_a: &[i64],
    start_b: &[i64],
    rngs: (ChaCha8Rng, ChaCha8Rng),
    stop_at_first: bool,
) -> IntersectionSample {
    let horizon = horizons.iter().copied().max().unwrap_or(0);
    let mut a = Walker::new(start_a, rngs.0);
    let mut b = Walker::new(start_b, rngs.1);
    let mut meetings = Vec::new();
    if a.pos == b.pos {
        meetings.push(0);
    }
    let parity_blocked = distance(start_a, start_b) % 2 == 1;
    let mut t = 0u64;
    while t < horizon && !parity_blocked && !(stop_at_first && !meetings.is_empty()) {
        let dist = distance(&a.pos, &b.pos) as u64;
        if dist > 2 * (horizon - t) {
            break;
        }
        let k = if dist >= 3 { ((dist - 1) / 2).min(horizon - t) } else { 1 };
        if k == 1 {
            a.step();
            b.step();
        } else {
            a.jump(k);
            b.jump(k);
        }
        t += k;
        if a.pos == b.pos {
            meetings.push(t);
        }
    }
    let counts = horizons.iter().map(|&h| meetings.iter().filter(|&&m| m <= h).count() as u64).collect();
    IntersectionSample { counts, hit: !meetings.is_empty(), first_meeting: meetings.first().copied() }
}

fn check_offset(cfg: &WalkConfig, v: &[i64]) -> Result<()> {
    if v.len() != cfg.d {
        return Err(invalid(format!("lattice vector has dimension {}, expected {}", v.len(), cfg.d)));
    }
    Ok(())
}

/// Lazily simulates `cfg.replicates` walk pairs started at `0` and `offset`.
///
/// Horizons default to `[cfg.horizon]` when empty.
pub fn sample_intersections<'a>(
    cfg: &'a WalkConfig,
    offset: &'a [i64],
    horizons: &'a [u64],
) -> Result<impl Iterator<Item = IntersectionSample> + 'a> {
    cfg.validate()?;
    check_offset(cfg, offset)?;
    let hs: Vec<u64> = if horizons.is_empty() { vec![cfg.horizon] } else { horizons.to_vec() };
    let origin = vec![0i64; cfg.d];
    Ok((0..cfg.replicates).map(move |i| {
        let rngs = (mix::stream_rng(cfg.seed, i, ROLE_FIRST), mix::stream_rng(cfg.seed, i, ROLE_SECOND));
        simulate_pair(&hs, &origin, offset, rngs, false)
    }))
}

/// Parallel version of [`sample_intersections`]; results are in replicate order
/// and identical to the sequential stream.
pub fn collect_intersections(cfg: &WalkConfig, offset: &[i64], horizons: &[u64]) -> Result<Vec<IntersectionSample>> {
    cfg.validate()?;
    check_offset(cfg, offset)?;
    let hs: Vec<u64> = if horizons.is_empty() { vec![cfg.horizon] } else { horizons.to_vec() };
    let origin = vec![0i64; cfg.d];
    Ok((0..cfg.replicates)
        .into_par_iter()
        .map(|i| {
            let rngs = (mix::stream_rng(cfg.seed, i, ROLE_FIRST), mix::stream_rng(cfg.seed, i, ROLE_SECOND));
            simulate_pair(&hs, &origin, offset, rngs, false)
        })
        .collect())
}

/// Probability that walks from `x` and `y` meet within the horizon.
///
/// The walker started at the lexicographically smaller point always takes the
/// first random stream, so the estimate is exactly symmetric in `(x, y)`.
pub fn kappa_hat(cfg: &WalkConfig, x: &[i64], y: &[i64]) -> Result<RunStats> {
    cfg.validate()?;
    check_offset(cfg, x)?;
    check_offset(cfg, y)?;
    if x == y {
        return Ok(RunStats { n: cfg.replicates, mean: 1.0, variance: 0.0, se: 0.0 });
    }
    let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
    let horizons = [cfg.horizon];
    let hits: Vec<f64> = (0..cfg.replicates)
        .into_par_iter()
        .map(|i| {
            let rngs = (mix::stream_rng(cfg.seed, i, ROLE_FIRST), mix::stream_rng(cfg.seed, i, ROLE_SECOND));
            simulate_pair(&horizons, lo, hi, rngs, true).hit as u8 as f64
        })
        .collect();
    hits.into_iter().collect::<Welford>().stats()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalCltRow {
    pub n: u64,
    /// Largest empirical point mass of `S_n`.
    pub sup_mass: f64,
    pub se: f64,
    /// `sup_mass * n^{d/2}`.
    pub scaled: f64,
}

/// Empirical `sup_x P(S_n = x)` for each even `n`, from `cfg.replicates` walks.
pub fn local_clt_check(cfg: &WalkConfig, n_list: &[u64]) -> Result<Vec<LocalCltRow>> {
    cfg.validate()?;
    let origin = vec![0i64; cfg.d];
    n_list
        .iter()
        .enumerate()
        .map(|(slot, &n)| {
            if n == 0 || n % 2 == 1 {
                return Err(invalid(format!("local CLT horizons must be positive and even, got {n}")));
            }
            let ends: Vec<Vec<i64>> = (0..cfg.replicates)
                .into_par_iter()
                .map(|i| {
                    let mut w = Walker::new(&origin, mix::stream_rng(cfg.seed, i, 16 + slot as u64));
                    w.jump(n);
                    w.pos
                })
                .collect();
            let mut freq: HashMap<Vec<i64>, u64> = HashMap::new();
            for e in ends {
                *freq.entry(e).or_default() += 1;
            }
            let top = freq.values().copied().max().unwrap_or(0);
            let m = cfg.replicates as f64;
            let p = top as f64 / m;
            Ok(LocalCltRow {
                n,
                sup_mass: p,
                se: (p * (1.0 - p) / m).sqrt(),
                scaled: p * (n as f64).powf(cfg.d as f64 / 2.0),
            })
        })
        .collect()
}

/// Empirical law of the counts in `samples` at horizon slot `slot`, as
/// `pmf[k]` for `k = 0..=max_k`.
pub fn count_pmf(samples: &[IntersectionSample], slot: usize, max_k: usize) -> Vec<f64> {
    let mut pmf = vec![0.0; max_k + 1];
    for s in samples {
        let k = s.counts[slot] as usize;
        if k <= max_k {
            pmf[k] += 1.0;
        }
    }
    let m = samples.len() as f64;
    pmf.iter_mut().for_each(|p| *p /= m);
    pmf
}

/// Total-variation distance on `{1, .., k_max}` between an empirical pmf and
/// the geometric law `rho^{k-1} (1 - rho)`.
pub fn geometric_tv(pmf: &[f64], rho: f64, k_max: usize) -> f64 {
    0.5 * (1..=k_max)
        .map(|k| {
            let emp = pmf.get(k).copied().unwrap_or(0.0);
            (emp - rho.powi(k as i32 - 1) * (1.0 - rho)).abs()
        })
        .sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn jump_preserves_parity_and_reach() {
        let mut w = Walker::new(&[0, 0, 0], ChaCha8Rng::seed_from_u64(3));
        for k in [1u64, 5, 7, 40, 1001] {
            let before = w.pos.clone();
            w.jump(k);
            let moved = distance(&before, &w.pos) as u64;
            assert!(moved <= k && (k - moved) % 2 == 0);
        }
    }

    #[test]
    fn jump_matches_stepwise_law() {
        // Mean squared displacement after k steps is exactly k.
        let k = 50u64;
        let mut rng_seed = 0;
        let mut acc = Welford::new();
        for _ in 0..20_000 {
            rng_seed += 1;
            let mut w = Walker::new(&[0, 0, 0], ChaCha8Rng::seed_from_u64(rng_seed));
            w.jump(k);
            acc.push(w.pos.iter().map(|c| (c * c) as f64).sum());
        }
        let s = acc.stats().unwrap();
        assert!((s.mean - k as f64).abs() < 4.0 * s.se, "{s:?}");
    }

    #[test]
    fn even_tail_sum_matches_direct_sum() {
        let direct: f64 = (1001..400_001u64).filter(|n| n % 2 == 0).map(|n| (n as f64).powf(-2.5)).sum::<f64>()
            + 2f64.powf(-2.5) * (200_000f64).powf(-1.5) / 1.5;
        let fast = even_tail_sum(1000, 2.5);
        assert!((fast / direct - 1.0).abs() < 1e-6, "{fast} vs {direct}");
    }

    #[test]
    fn geometric_tv_of_exact_law_is_zero() {
        let rho: f64 = 0.3;
        let pmf: Vec<f64> = (0..=20).map(|k| if k == 0 { 0.0 } else { rho.powi(k - 1) * (1.0 - rho) }).collect();
        assert!(geometric_tv(&pmf, rho, 20) < 1e-15);
    }
}
