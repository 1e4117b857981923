//! The polymer surface, its normalized partition functions, and the
//! brute-force path-sum oracles.
//!
//! The surface obeys the one-step recursion
//! `beta f(t+1, x) = beta xi(t+1, x) + log sum_{|y-x|=1} exp(beta f(t, y))`,
//! so a region of radius `R` at time `t` determines the exact values within
//! radius `R - 1` at time `t + 1`. [`HeightSlab`] carries one time slice of
//! `beta f` over such a region and shrinks it by one per step.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lattice::{self, Diamond};
use crate::mix;
use crate::noise::{self, Environment, NoiseField, NoiseLaw};
use crate::stats::{RunStats, Welford};

/// Largest number of paths the brute-force oracles will enumerate.
pub const MAX_ENUMERATED_PATHS: u64 = 10_000_000;

/// Lipschitz initial profile `g: R^d -> R`.
#[derive(Clone)]
pub enum InitialCondition {
    Zero,
    Constant(f64),
    /// `g(u) = a . u`.
    Linear(Vec<f64>),
    /// `g(u) = min(|u|, cap)`, Lipschitz with constant 1.
    CappedNorm { cap: f64 },
    Custom { f: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>, lipschitz: f64 },
}

impl fmt::Debug for InitialCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitialCondition::Zero => write!(f, "Zero"),
            InitialCondition::Constant(c) => write!(f, "Constant({c})"),
            InitialCondition::Linear(a) => write!(f, "Linear({a:?})"),
            InitialCondition::CappedNorm { cap } => write!(f, "CappedNorm {{ cap: {cap} }}"),
            InitialCondition::Custom { lipschitz, .. } => write!(f, "Custom {{ lipschitz: {lipschitz} }}"),
        }
    }
}

impl InitialCondition {
    /// Wraps a user function after spot-checking its Lipschitz bound on random
    /// pairs in `[-10, 10]^dim`.
    pub fn custom<F>(f: F, lipschitz: f64, dim: usize, seed: u64) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        if !(lipschitz >= 0.0 && lipschitz.is_finite()) {
            return Err(invalid("lipschitz constant must be finite and non-negative"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..512 {
            let u: Vec<f64> = (0..dim).map(|_| rng.random_range(-10.0..10.0)).collect();
            let v: Vec<f64> = if rng.random_bool(0.5) {
                u.iter().map(|c| c + rng.random_range(-1e-3..1e-3)).collect()
            } else {
                (0..dim).map(|_| rng.random_range(-10.0..10.0)).collect()
            };
            let dist = u.iter().zip(&v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            let gap = (f(&u) - f(&v)).abs();
            if !gap.is_finite() || gap > lipschitz * dist * (1.0 + 1e-9) + 1e-12 {
                return Err(invalid(format!(
                    "custom initial condition violates its lipschitz bound {lipschitz} at {u:?}, {v:?}"
                )));
            }
        }
        Ok(InitialCondition::Custom { f: Arc::new(f), lipschitz })
    }

    pub fn eval(&self, u: &[f64]) -> f64 {
        match self {
            InitialCondition::Zero => 0.0,
            InitialCondition::Constant(c) => *c,
            InitialCondition::Linear(a) => a.iter().zip(u).map(|(a, u)| a * u).sum(),
            InitialCondition::CappedNorm { cap } => u.iter().map(|c| c * c).sum::<f64>().sqrt().min(*cap),
            InitialCondition::Custom { f, .. } => f(u),
        }
    }

    /// `g_eps(y) = g(eps * y)` at a lattice point.
    pub fn at_lattice(&self, eps: f64, y: &[i64]) -> f64 {
        match self {
            InitialCondition::Zero => 0.0,
            InitialCondition::Constant(c) => *c,
            _ if y.len() <= 8 => {
                let mut buf = [0.0; 8];
                for (b, &c) in buf.iter_mut().zip(y) {
                    *b = eps * c as f64;
                }
                self.eval(&buf[..y.len()])
            }
            _ => {
                let u: Vec<f64> = y.iter().map(|&c| eps * c as f64).collect();
                self.eval(&u)
            }
        }
    }

    pub fn lipschitz_constant(&self) -> f64 {
        match self {
            InitialCondition::Zero | InitialCondition::Constant(_) => 0.0,
            InitialCondition::Linear(a) => a.iter().map(|c| c * c).sum::<f64>().sqrt(),
            InitialCondition::CappedNorm { .. } => 1.0,
            InitialCondition::Custom { lipschitz, .. } => *lipschitz,
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            InitialCondition::Linear(a) if a.len() != dim => Err(invalid(format!(
                "linear initial condition has {} coefficients, lattice dimension is {dim}",
                a.len()
            ))),
            InitialCondition::Constant(c) if !c.is_finite() => Err(invalid("constant initial condition must be finite")),
            InitialCondition::CappedNorm { cap } if !(*cap >= 0.0) => Err(invalid("cap must be non-negative")),
            _ => Ok(()),
        }
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("beta must be positive and finite, got {beta}")))
    }
}

/// One time slice of `beta * f(t, .)` over a diamond in which every stored
/// value is exact.
#[derive(Debug, Clone)]
pub struct HeightSlab {
    t: u64,
    beta: f64,
    layout: Diamond,
    values: Vec<f64>,
}

impl HeightSlab {
    /// Time-zero slice `beta * g_eps` on the diamond of the given radius.
    ///
    /// With `parity = Some(p)` only sites with `sum(y - center) = p (mod 2)`
    /// are kept; this is enough when a single parity class is wanted later.
    pub fn initial(
        g: &InitialCondition,
        eps: f64,
        beta: f64,
        center: &[i64],
        radius: i64,
        parity: Option<u8>,
    ) -> Result<Self> {
        check_beta(beta)?;
        g.validate(center.len())?;
        let layout = match parity {
            None => Diamond::new(center, radius)?,
            Some(p) => Diamond::with_parity(center, radius, p)?,
        };
        let mut values = vec![0.0; layout.len()];
        match g {
            InitialCondition::Zero => {}
            InitialCondition::Constant(c) => values.fill(beta * c),
            _ => layout.for_each_site(|i, y| values[i] = beta * g.at_lattice(eps, y)),
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("initial condition produced non-finite values"));
        }
        Ok(Self { t: 0, beta, layout, values })
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// L1 radius around the centre within which every stored value is exact.
    pub fn valid_radius(&self) -> i64 {
        self.layout.radius()
    }

    pub fn layout(&self) -> &Diamond {
        &self.layout
    }

    /// Raw `beta * f` values in layout order.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `beta * f(t, x)` if the site is stored.
    pub fn beta_f(&self, x: &[i64]) -> Option<f64> {
        self.layout.index_of(x).map(|i| self.values[i])
    }

    /// `f(t, x)` if the site is stored.
    pub fn f(&self, x: &[i64]) -> Option<f64> {
        self.beta_f(x).map(|v| v / self.beta)
    }

    /// Advances one time step using the noise layer `t + 1`.
    pub fn step<N: NoiseField>(&self, env: &N) -> Result<Self> {
        if self.layout.radius() < 1 {
            return Err(Error::ConeExactness(format!(
                "slab at t={} has no exact region left to step",
                self.t
            )));
        }
        if env.dim() != self.layout.dim() {
            return Err(invalid("environment and slab dimensions differ"));
        }
        let radius = self.layout.radius() - 1;
        let next = match self.layout.parity() {
            None => Diamond::new(self.layout.center(), radius)?,
            Some(p) => Diamond::with_parity(self.layout.center(), radius, 1 - p)?,
        };
        let mut values = vec![0.0; next.len()];
        log_domain_step(&self.layout, &self.values, &next, &mut values, radius, env, self.t + 1, self.beta);
        Ok(Self { t: self.t + 1, beta: self.beta, layout: next, values })
    }

    /// Advances `steps` time steps.
    pub fn advance<N: NoiseField>(mut self, env: &N, steps: u64) -> Result<Self> {
        for _ in 0..steps {
            self = self.step(env)?;
        }
        Ok(self)
    }

    /// Bytes held by a slab of this shape, for budget checks.
    pub fn bytes_for(d: usize, radius: i64, parity: Option<u8>) -> u128 {
        lattice::diamond_count(d, radius, parity) * std::mem::size_of::<f64>() as u128
    }
}

/// Largest spread of `beta f` over a slab for which a single shared shift
/// keeps every `exp` term in normal floating-point range.
const SHARED_SHIFT_SPREAD: f64 = 600.0;

#[allow(clippy::too_many_arguments)]
fn log_domain_step<N: NoiseField>(
    prev: &Diamond,
    src: &[f64],
    next: &Diamond,
    dst: &mut [f64],
    active: i64,
    env: &N,
    t_new: u64,
    beta: f64,
) {
    let (lo, hi) = src.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let mut noise = Vec::new();
    if hi - lo <= SHARED_SHIFT_SPREAD {
        // Shift by the slab maximum once, so each site needs one exp and one ln.
        let weights: Vec<f64> = src.iter().map(|v| (v - hi).exp()).collect();
        let mut acc = Vec::new();
        lattice::sweep(prev, &weights, next, dst, active, |job, out, nb| {
            noise.resize(out.len(), 0.0);
            env.fill_row(t_new, job.prefix, job.z0, job.step, &mut noise);
            lattice::sum_sources(&mut acc, nb);
            for ((o, a), xi) in out.iter_mut().zip(&acc).zip(&noise) {
                *o = beta * xi + hi + a.ln();
            }
        });
    } else {
        lattice::sweep(prev, src, next, dst, active, |job, out, nb| {
            noise.resize(out.len(), 0.0);
            env.fill_row(t_new, job.prefix, job.z0, job.step, &mut noise);
            for (k, o) in out.iter_mut().enumerate() {
                let mut m = f64::NEG_INFINITY;
                for s in nb {
                    m = m.max(s[k]);
                }
                let mut acc = 0.0;
                for s in nb {
                    acc += (s[k] - m).exp();
                }
                *o = beta * noise[k] + m + acc.ln();
            }
        });
    }
}

/// `f_eps(t, x)` computed exactly from the smallest cone that determines it.
pub fn surface_at<N: NoiseField>(env: &N, beta: f64, g: &InitialCondition, eps: f64, t: u64, x: &[i64]) -> Result<f64> {
    let slab = HeightSlab::initial(g, eps, beta, x, t as i64, Some((t % 2) as u8))?.advance(env, t)?;
    Ok(slab.f(x).expect("apex of the cone is stored"))
}

/// Streaming log-sum-exp.
#[derive(Debug, Clone, Copy)]
struct LogSum {
    max: f64,
    acc: f64,
}

impl LogSum {
    fn new() -> Self {
        Self { max: f64::NEG_INFINITY, acc: 0.0 }
    }

    fn push(&mut self, v: f64) {
        if v <= self.max {
            self.acc += (v - self.max).exp();
        } else {
            self.acc = self.acc * (self.max - v).exp() + 1.0;
            self.max = v;
        }
    }

    fn value(&self) -> f64 {
        self.max + self.acc.ln()
    }
}

fn check_enumeration(d: usize, steps: u64) -> Result<()> {
    let paths = (2 * d as u64).checked_pow(steps as u32).filter(|&n| n <= MAX_ENUMERATED_PATHS);
    if paths.is_none() {
        return Err(Error::Combinatorial(format!(
            "(2d)^t = {}^{steps} paths exceeds the enumeration limit {MAX_ENUMERATED_PATHS}",
            2 * d
        )));
    }
    Ok(())
}

/// Visits every nearest-neighbour path of `steps` steps ending at `end` at time
/// `t_end`, calling `visit(start, beta * sum of noise along the path)`. The
/// noise sum covers times `t_end - steps + 1 ..= t_end`.
fn enumerate_paths<N: NoiseField, F: FnMut(&[i64], f64)>(env: &N, beta: f64, t_end: u64, steps: u64, end: &[i64], visit: &mut F) {
    fn rec<N: NoiseField, F: FnMut(&[i64], f64)>(env: &N, beta: f64, t: u64, left: u64, pos: &mut Vec<i64>, acc: f64, visit: &mut F) {
        let acc = acc + beta * env.xi(t, pos);
        if left == 1 {
            for axis in 0..pos.len() {
                for delta in [-1, 1] {
                    pos[axis] += delta;
                    visit(pos, acc);
                    pos[axis] -= delta;
                }
            }
            return;
        }
        for axis in 0..pos.len() {
            for delta in [-1, 1] {
                pos[axis] += delta;
                rec(env, beta, t - 1, left - 1, pos, acc, visit);
                pos[axis] -= delta;
            }
        }
    }
    let mut pos = end.to_vec();
    if steps == 0 {
        visit(&pos, 0.0);
    } else {
        rec(env, beta, t_end, steps, &mut pos, 0.0, visit);
    }
}

/// `f_eps(t, x)` by literal enumeration of all `(2d)^t` paths ending at `x`.
pub fn brute_force_f<N: NoiseField>(env: &N, beta: f64, g: &InitialCondition, eps: f64, t: u64, x: &[i64]) -> Result<f64> {
    check_beta(beta)?;
    check_enumeration(x.len(), t)?;
    let mut sum = LogSum::new();
    enumerate_paths(env, beta, t, t, x, &mut |start, noise| sum.push(beta * g.at_lattice(eps, start) + noise));
    Ok(sum.value() / beta)
}

/// A positive quantity stored through its logarithm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogValue {
    pub log: f64,
}

impl LogValue {
    pub fn value(&self) -> f64 {
        self.log.exp()
    }
}

/// `t * log(2d m(beta))`, the normalizing exponent.
pub fn normalizer(d: usize, law: &NoiseLaw, beta: f64, t: u64) -> Result<f64> {
    Ok(t as f64 * ((2 * d) as f64).ln() + t as f64 * noise::log_mgf(law, beta)?)
}

/// `Y(t, x)`; the `log` field is `F(t, x)`.
pub fn normalized_y<N: NoiseField>(env: &N, law: &NoiseLaw, beta: f64, t: u64, x: &[i64]) -> Result<LogValue> {
    partition_z(env, law, beta, &InitialCondition::Zero, 1.0, t, x)
}

/// `Z_eps(t, x)`; the `log` field is `F_eps(t, x)`.
pub fn partition_z<N: NoiseField>(
    env: &N,
    law: &NoiseLaw,
    beta: f64,
    g: &InitialCondition,
    eps: f64,
    t: u64,
    x: &[i64],
) -> Result<LogValue> {
    if t == 0 {
        return Err(invalid("partition functions are defined for t >= 1"));
    }
    let bf = beta * surface_at(env, beta, g, eps, t, x)?;
    Ok(LogValue { log: bf - normalizer(x.len(), law, beta, t)? })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MidpointEntry {
    pub y: Vec<i64>,
    /// `log Y(s, t, x, y)`.
    pub log_y: f64,
    pub zeta: f64,
    /// `log Z_eps(s, y)`.
    pub log_z_s: f64,
}

/// Decomposition of `Z_eps(t, x)` over the position `y` at an earlier time `s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MidpointDecomposition {
    pub s: u64,
    pub t: u64,
    pub x: Vec<i64>,
    pub entries: Vec<MidpointEntry>,
    /// `log Y(s, t, x)`.
    pub log_y_total: f64,
    /// `log W_eps(s, t, x) = log Z_eps(t, x) - log Y(s, t, x)`.
    pub log_w: f64,
    /// `log Z_eps(t, x)` from the transfer engine.
    pub log_z_t: f64,
    /// `|Z_eps(t,x) - sum_y Y(s,t,x,y) Z_eps(s,y)| / Z_eps(t,x)`.
    pub residual: f64,
}

/// Splits paths ending at `(t, x)` at time `s` and checks
/// `Z_eps(t, x) = sum_y Y(s, t, x, y) Z_eps(s, y)` on the given environment.
#[allow(clippy::too_many_arguments)]
pub fn midpoint_decomposition<N: NoiseField>(
    env: &N,
    law: &NoiseLaw,
    beta: f64,
    g: &InitialCondition,
    eps: f64,
    s: u64,
    t: u64,
    x: &[i64],
) -> Result<MidpointDecomposition> {
    check_beta(beta)?;
    if !(1 <= s && s < t) {
        return Err(invalid(format!("need 1 <= s < t, got s={s}, t={t}")));
    }
    let d = x.len();
    let gap = t - s;
    check_enumeration(d, gap)?;
    let log_m = noise::log_mgf(law, beta)?;
    let log_norm = gap as f64 * (((2 * d) as f64).ln() + log_m);

    // Y(s, t, x, y): paths over times s+1..=t, grouped by their position at s.
    let mut groups: std::collections::BTreeMap<Vec<i64>, LogSum> = std::collections::BTreeMap::new();
    enumerate_paths(env, beta, t, gap, x, &mut |start, noise| {
        groups.entry(start.to_vec()).or_insert_with(LogSum::new).push(noise);
    });

    // Z_eps(s, .) on the diamond of radius t - s around x.
    let slab = HeightSlab::initial(g, eps, beta, x, t as i64, None)?.advance(env, s)?;
    let log_norm_s = normalizer(d, law, beta, s)?;

    let mut total = LogSum::new();
    let mut recombined = LogSum::new();
    let mut entries = Vec::with_capacity(groups.len());
    for (y, sum) in groups {
        let log_y = sum.value() - log_norm;
        let log_z_s = slab.beta_f(&y).expect("midpoint site lies in the slab") - log_norm_s;
        total.push(log_y);
        recombined.push(log_y + log_z_s);
        entries.push(MidpointEntry { y, log_y, zeta: 0.0, log_z_s });
    }
    let log_y_total = total.value();
    for e in &mut entries {
        e.zeta = (e.log_y - log_y_total).exp();
    }
    let log_z_t = partition_z(env, law, beta, g, eps, t, x)?.log;
    let residual = (1.0 - (recombined.value() - log_z_t).exp()).abs();
    Ok(MidpointDecomposition {
        s,
        t,
        x: x.to_vec(),
        entries,
        log_y_total,
        log_w: log_z_t - log_y_total,
        log_z_t,
        residual,
    })
}

/// `log Y(t, 0)` for every `t` in `t_list` on the time-reversed view of `base`.
///
/// Reversing time turns the point-to-line sum into a forward sweep from the
/// origin: with `w(k, y) = exp(beta xi(k, y)) / m(beta)` and the walk weights
/// `u_0 = delta_0`, `u_{k+1}(y) = (1/2d) sum_{y'~y} u_k(y') w(k+1, y')`, the
/// total mass `W_t = sum_y u_{t-1}(y) w(t, y)` equals `Y(t, 0)` computed on
/// [`noise::AnchoredNoise`]`(base, t, 0)`. One sweep serves every `t`.
pub fn endpoint_sweep<N: NoiseField>(base: &N, law: &NoiseLaw, beta: f64, t_list: &[u64]) -> Result<Vec<f64>> {
    check_beta(beta)?;
    check_t_list(t_list)?;
    let d = base.dim();
    let t_max = *t_list.last().expect("non-empty");
    let log_m = noise::log_mgf(law, beta)?;
    let origin = vec![0i64; d];
    let layouts = [
        Diamond::with_parity(&origin, t_max as i64 + 1, 0)?,
        Diamond::with_parity(&origin, t_max as i64 + 1, 1)?,
    ];
    let mut bufs = [vec![0.0; layouts[0].len()], vec![0.0; layouts[1].len()]];

    // Buffer k % 2 holds u_k(y) w(k+1, y) / exp(log_scale).
    let origin_idx = layouts[0].index_of(&origin).expect("origin stored");
    bufs[0][origin_idx] = (beta * base.xi(1, &origin) - log_m).exp();
    let mut log_scale = 0.0;
    let mut mass = bufs[0][origin_idx];
    let mut out = Vec::with_capacity(t_list.len());
    let mut want = t_list.iter().peekable();
    let inv_2d = 1.0 / (2 * d) as f64;
    let mut noise = Vec::new();
    let mut acc = Vec::new();

    for k in 0..t_max {
        // Here `mass * exp(log_scale)` equals W_{k+1}.
        if want.peek() == Some(&&(k + 1)) {
            out.push(log_scale + mass.ln());
            want.next();
        }
        if k + 1 == t_max {
            break;
        }
        log_scale += mass.ln();
        let factor = inv_2d / mass;
        let (lo, hi) = bufs.split_at_mut(1);
        let (src, dst) = if k % 2 == 0 { (&lo[0], &mut hi[0]) } else { (&hi[0], &mut lo[0]) };
        let (prev, next) = (&layouts[(k % 2) as usize], &layouts[((k + 1) % 2) as usize]);
        let t_noise = k + 2;
        let mut new_mass = 0.0;
        lattice::sweep(prev, src, next, dst, k as i64 + 1, |job, seg, nb| {
            noise.resize(seg.len(), 0.0);
            base.fill_row(t_noise, job.prefix, job.z0, job.step, &mut noise);
            lattice::sum_sources(&mut acc, nb);
            for ((o, a), xi) in seg.iter_mut().zip(&acc).zip(&noise) {
                let v = a * factor * (beta * xi - log_m).exp();
                *o = v;
                new_mass += v;
            }
        });
        mass = new_mass;
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::EstimationFailure(format!("endpoint sweep lost positivity at t={}", k + 2)));
        }
    }
    Ok(out)
}

fn check_t_list(t_list: &[u64]) -> Result<()> {
    if t_list.is_empty() || t_list[0] == 0 || t_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid("time list must be non-empty, positive and strictly increasing"));
    }
    Ok(())
}

/// Replicate `i` of a Monte Carlo run over environments uses this seed.
pub fn replicate_seed(seed: u64, replicate: u64) -> u64 {
    mix::derive_seed(seed, replicate)
}

/// `log Y(t, 0)` per replicate (outer) and per `t` (inner).
pub fn sample_log_y(law: &NoiseLaw, d: usize, beta: f64, t_list: &[u64], replicates: u64, seed: u64) -> Result<Vec<Vec<f64>>> {
    check_t_list(t_list)?;
    (0..replicates)
        .into_par_iter()
        .map(|i| {
            let env = Environment::new(replicate_seed(seed, i), law.clone(), d)?;
            endpoint_sweep(&env, law, beta, t_list)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtaRow {
    pub t: u64,
    /// Control-variate estimate of `E log Y(t, 0)`.
    pub eta: f64,
    pub se: f64,
    /// Plain sample mean of `log Y(t, 0)`.
    pub plain_mean: f64,
    pub plain_se: f64,
}

/// Monte Carlo estimates of `eta(beta, t) = E log Y(t, 0)`.
///
/// Two unbiased estimators are reported. The plain one averages `F(t, 0)`.
/// The control-variate one subtracts the martingale increments
/// `R_j - 1`, `R_j = W_{t_j} / W_{t_{j-1}}` (with `W_{t_{-1}} = 1`), each of
/// which has conditional mean zero because `W_t` is a martingale in `t` on the
/// swept environment. It removes the first-order fluctuation of `log W` and is
/// far more precise at the same replicate count.
pub fn eta_table(samples: &[Vec<f64>], t_list: &[u64]) -> Result<Vec<EtaRow>> {
    let mut rows = Vec::with_capacity(t_list.len());
    for (k, &t) in t_list.iter().enumerate() {
        let plain = samples.iter().map(|s| s[k]).collect::<Welford>().stats()?;
        let cv = samples
            .iter()
            .map(|s| {
                let mut correction = 0.0;
                let mut prev = 0.0;
                for &lw in &s[..=k] {
                    correction += (lw - prev).exp() - 1.0;
                    prev = lw;
                }
                s[k] - correction
            })
            .collect::<Welford>()
            .stats()?;
        rows.push(EtaRow { t, eta: cv.mean, se: cv.se, plain_mean: plain.mean, plain_se: plain.se });
    }
    Ok(rows)
}

pub fn eta_estimate(law: &NoiseLaw, d: usize, beta: f64, t_list: &[u64], replicates: u64, seed: u64) -> Result<Vec<EtaRow>> {
    let samples = sample_log_y(law, d, beta, t_list, replicates, seed)?;
    eta_table(&samples, t_list)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowerTailRow {
    pub t: u64,
    /// Sample mean and se of `exp(-theta F(t, 0))`.
    pub stats: RunStats,
}

pub fn lower_tail_table(samples: &[Vec<f64>], t_list: &[u64], theta: f64) -> Result<Vec<LowerTailRow>> {
    if !(theta > 0.0) {
        return Err(invalid("theta must be positive"));
    }
    t_list
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let stats = samples.iter().map(|s| (-theta * s[k]).exp()).collect::<Welford>().stats()?;
            Ok(LowerTailRow { t, stats })
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
pub fn lower_tail_check(
    law: &NoiseLaw,
    d: usize,
    beta: f64,
    theta: f64,
    t_list: &[u64],
    replicates: u64,
    seed: u64,
) -> Result<Vec<LowerTailRow>> {
    let samples = sample_log_y(law, d, beta, t_list, replicates, seed)?;
    lower_tail_table(&samples, t_list, theta)
}

/// Boundedness check used for the lower tail: the value at the largest `t`
/// is at most twice the value at the smallest `t` plus three combined se.
pub fn lower_tail_bounded(rows: &[LowerTailRow]) -> bool {
    match (rows.first(), rows.last()) {
        (Some(a), Some(b)) => {
            let se = (a.stats.se.powi(2) + b.stats.se.powi(2)).sqrt();
            b.stats.mean <= 2.0 * a.stats.mean + 3.0 * se
        }
        _ => true,
    }
}
