//! Deterministic limit objects: the lattice heat average
//! `G_eps(t, x) = E exp(beta g_eps(S_t + x))` and the continuum Cole–Hopf
//! solution `h(t, x) = beta^{-1} log E exp(beta g(sqrt(t/d) Z + x))`.
//!
//! `G_eps` is computed by the exact recursion
//! `G(t + 1, x) = (1/2d) sum_{|y-x|=1} G(t, y)`. Values are neighbour averages,
//! so they never leave the range of the initial profile; they are kept as
//! plain numbers relative to a single stored log scale.

use std::cell::Cell;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lattice::{self, Diamond};
use crate::mix;
use crate::noise::standard_normal_quantile;
use crate::polymer::InitialCondition;
use crate::quadrature::{integrate, GaussianRule};
use crate::scaling::{space_index, time_index};

/// Largest spread of `beta g_eps` over a slab that the linear representation
/// accepts.
const MAX_SPREAD: f64 = 600.0;

/// Coefficients of `d_t h = nu Lap h + (lambda / 2) |grad h|^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KpzParams {
    pub nu: f64,
    pub lambda: f64,
    pub beta: f64,
    pub d: usize,
}

impl KpzParams {
    pub fn new(d: usize, beta: f64) -> Result<Self> {
        if d == 0 {
            return Err(invalid("dimension must be positive"));
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(invalid(format!("beta must be positive and finite, got {beta}")));
        }
        Ok(Self { nu: 1.0 / (2 * d) as f64, lambda: beta / d as f64, beta, d })
    }
}

/// One time slice of `G_eps` over a diamond, exact within its radius.
#[derive(Debug, Clone)]
pub struct HeatSlab {
    t: u64,
    layout: Diamond,
    log_scale: f64,
    values: Vec<f64>,
}

impl HeatSlab {
    /// `exp(beta g_eps)` on the diamond; parity as for the polymer slab.
    pub fn initial(
        g: &InitialCondition,
        eps: f64,
        beta: f64,
        center: &[i64],
        radius: i64,
        parity: Option<u8>,
    ) -> Result<Self> {
        g.validate(center.len())?;
        let layout = match parity {
            None => Diamond::new(center, radius)?,
            Some(p) => Diamond::with_parity(center, radius, p)?,
        };
        let (log_scale, values) = initial_weights(g, eps, beta, &layout)?;
        Ok(Self { t: 0, layout, log_scale, values })
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn layout(&self) -> &Diamond {
        &self.layout
    }

    pub fn valid_radius(&self) -> i64 {
        self.layout.radius()
    }

    /// `log G_eps(t, x)` if the site is stored.
    pub fn log_g(&self, x: &[i64]) -> Option<f64> {
        self.layout.index_of(x).map(|i| self.log_scale + self.values[i].ln())
    }

    /// All stored `log G_eps` values in layout order.
    pub fn log_values(&self) -> Vec<f64> {
        self.values.iter().map(|v| self.log_scale + v.ln()).collect()
    }

    /// Neighbour average into a diamond one smaller.
    pub fn heat_step(&self) -> Result<Self> {
        if self.layout.radius() < 1 {
            return Err(Error::ConeExactness(format!("heat slab at t={} has no exact region left", self.t)));
        }
        let radius = self.layout.radius() - 1;
        let next = match self.layout.parity() {
            None => Diamond::new(self.layout.center(), radius)?,
            Some(p) => Diamond::with_parity(self.layout.center(), radius, 1 - p)?,
        };
        let mut values = vec![0.0; next.len()];
        average_step(&self.layout, &self.values, &next, &mut values, radius);
        Ok(Self { t: self.t + 1, layout: next, log_scale: self.log_scale, values })
    }

    pub fn advance(mut self, steps: u64) -> Result<Self> {
        for _ in 0..steps {
            self = self.heat_step()?;
        }
        Ok(self)
    }
}

fn initial_weights(g: &InitialCondition, eps: f64, beta: f64, layout: &Diamond) -> Result<(f64, Vec<f64>)> {
    let mut v = vec![0.0; layout.len()];
    layout.for_each_site(|i, y| v[i] = beta * g.at_lattice(eps, y));
    let (lo, hi) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(invalid("initial condition produced non-finite values"));
    }
    if hi - lo > MAX_SPREAD {
        return Err(invalid(format!(
            "beta g_eps spans {:.1} over the slab, more than the supported {MAX_SPREAD}",
            hi - lo
        )));
    }
    let shift = 0.5 * (lo + hi);
    v.iter_mut().for_each(|x| *x = (*x - shift).exp());
    Ok((shift, v))
}

fn average_step(prev: &Diamond, src: &[f64], next: &Diamond, dst: &mut [f64], active: i64) {
    let inv = 1.0 / (2 * prev.dim()) as f64;
    lattice::sweep(prev, src, next, dst, active, |_, out, nb| {
        out.copy_from_slice(nb[0]);
        for s in &nb[1..] {
            for (o, v) in out.iter_mut().zip(s.iter()) {
                *o += v;
            }
        }
        out.iter_mut().for_each(|o| *o *= inv);
    });
}

/// `log G_eps(t, x)` from the smallest cone that determines it.
///
/// Runs on two fixed buffers instead of reallocating a slab per step.
pub fn log_heat_at(g: &InitialCondition, eps: f64, beta: f64, t: u64, x: &[i64]) -> Result<f64> {
    match g {
        InitialCondition::Zero => return Ok(0.0),
        InitialCondition::Constant(c) => return Ok(beta * c),
        _ => {}
    }
    let radius = t as i64;
    let p = (t % 2) as u8;
    let layouts = [Diamond::with_parity(x, radius, p)?, Diamond::with_parity(x, radius, 1 - p)?];
    let (log_scale, first) = initial_weights(g, eps, beta, &layouts[0])?;
    let mut bufs = [first, vec![0.0; layouts[1].len()]];
    for k in 0..t {
        let (a, b) = ((k % 2) as usize, ((k + 1) % 2) as usize);
        let [b0, b1] = &mut bufs;
        let (src, dst) = if a == 0 { (&*b0, b1) } else { (&*b1, b0) };
        average_step(&layouts[a], src, &layouts[b], dst, radius - k as i64 - 1);
    }
    let last = (t % 2) as usize;
    let i = layouts[last].index_of(x).expect("apex of the cone is stored");
    Ok(log_scale + bufs[last][i].ln())
}

/// `G_eps(t, x)` for `g(u) = a.u`, from independent steps.
pub fn linear_heat_closed_form(a: &[f64], eps: f64, beta: f64, t: u64, x: &[i64]) -> f64 {
    log_linear_heat_closed_form(a, eps, beta, t, x).exp()
}

/// Logarithm of [`linear_heat_closed_form`].
pub fn log_linear_heat_closed_form(a: &[f64], eps: f64, beta: f64, t: u64, x: &[i64]) -> f64 {
    let d = a.len() as f64;
    let drift: f64 = a.iter().zip(x).map(|(ai, &xi)| ai * xi as f64).sum();
    let step: f64 = a.iter().map(|ai| (beta * eps * ai).cosh()).sum::<f64>() / d;
    beta * eps * drift + t as f64 * step.ln()
}

/// How a value of `h` was obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum HMethod {
    ClosedForm,
    /// Tensor Gauss–Hermite; `delta` is the relative change from the previous order.
    GaussHermite { order: usize, delta: f64, converged: bool },
    /// Nested adaptive quadrature in radial coordinates.
    Radial,
    /// Randomly shifted Halton points.
    QuasiMonteCarlo { points: usize, shifts: usize, se: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HValue {
    pub h: f64,
    pub method: HMethod,
}

const GH_ORDERS: [usize; 5] = [8, 16, 32, 64, 128];
const GH_TOL: f64 = 1e-9;
/// Largest tensor rule (`order^d` nodes) attempted.
const GH_MAX_NODES: usize = 4_000_000;
const QMC_POINTS: usize = 1 << 15;
const QMC_SHIFTS: usize = 16;
const QMC_SEED: u64 = 0x5eed_c01e;

fn check_point(params: &KpzParams, g: &InitialCondition, t: f64, x: &[f64]) -> Result<()> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(invalid(format!("t must be positive and finite, got {t}")));
    }
    if x.len() != params.d {
        return Err(invalid(format!("point has dimension {}, expected {}", x.len(), params.d)));
    }
    g.validate(params.d)
}

/// Cole–Hopf solution `h(t, x)`.
///
/// Closed forms for zero, constant and linear `g`; radial quadrature for the
/// capped norm; Gauss–Hermite for other `g` when `d <= 3`, otherwise
/// quasi-Monte Carlo.
pub fn cole_hopf_h(params: &KpzParams, g: &InitialCondition, t: f64, x: &[f64]) -> Result<HValue> {
    check_point(params, g, t, x)?;
    let closed = |h| Ok(HValue { h, method: HMethod::ClosedForm });
    match g {
        InitialCondition::Zero => closed(0.0),
        InitialCondition::Constant(c) => closed(*c),
        InitialCondition::Linear(a) => {
            let ax: f64 = a.iter().zip(x).map(|(p, q)| p * q).sum();
            let a2: f64 = a.iter().map(|p| p * p).sum();
            closed(ax + params.beta * a2 * t / (2 * params.d) as f64)
        }
        InitialCondition::CappedNorm { cap } => radial_h(params, *cap, t, x),
        InitialCondition::Custom { .. } if params.d <= 3 => gauss_hermite_h(params, g, t, x),
        InitialCondition::Custom { .. } => qmc_h(params, g, t, x, QMC_POINTS, QMC_SHIFTS, QMC_SEED),
    }
}

/// `h(t, x)` by tensor Gauss–Hermite for any `g`, raising the order until
/// successive orders agree to `1e-9` relative in `E exp(beta g)`.
///
/// Non-convergence is reported in the returned diagnostics, not as an error.
pub fn gauss_hermite_h(params: &KpzParams, g: &InitialCondition, t: f64, x: &[f64]) -> Result<HValue> {
    check_point(params, g, t, x)?;
    let (beta, d) = (params.beta, params.d);
    let s = (t / d as f64).sqrt();
    let shift = beta * g.eval(x);
    let mut u = vec![0.0; d];
    let mut prev: Option<f64> = None;
    let mut last = None;
    for &order in &GH_ORDERS {
        if order.checked_pow(d as u32).is_none_or(|n| n > GH_MAX_NODES) {
            break;
        }
        let rule = GaussianRule::new(order)?;
        let e = rule.expect_tensor(d, |z| {
            for k in 0..d {
                u[k] = x[k] + s * z[k];
            }
            (beta * g.eval(&u) - shift).exp()
        });
        if !(e > 0.0 && e.is_finite()) {
            return Err(Error::EstimationFailure(format!("Gauss–Hermite expectation is {e} at order {order}")));
        }
        let h = (shift + e.ln()) / beta;
        let delta = prev.map_or(f64::INFINITY, |p: f64| (e / p - 1.0).abs());
        last = Some(HValue { h, method: HMethod::GaussHermite { order, delta, converged: delta < GH_TOL } });
        if delta < GH_TOL {
            break;
        }
        prev = Some(e);
    }
    last.ok_or_else(|| Error::EstimationFailure(format!("no Gauss–Hermite rule fits the node budget in d = {d}")))
}

/// `h(t, x)` by randomly shifted Halton points; the standard error comes
/// from the spread across shifts.
pub fn qmc_h(
    params: &KpzParams,
    g: &InitialCondition,
    t: f64,
    x: &[f64],
    points: usize,
    shifts: usize,
    seed: u64,
) -> Result<HValue> {
    check_point(params, g, t, x)?;
    if points == 0 || shifts < 2 {
        return Err(invalid("quasi-Monte Carlo needs points and at least two shifts"));
    }
    let (beta, d) = (params.beta, params.d);
    let s = (t / d as f64).sqrt();
    let shift_log = beta * g.eval(x);
    let primes = first_primes(d);
    let mut u = vec![0.0; d];
    let mut means = Vec::with_capacity(shifts);
    for j in 0..shifts {
        let mut rng = mix::stream_rng(seed, j as u64, 0);
        let offset: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
        let mut sum = 0.0;
        for i in 1..=points {
            for k in 0..d {
                let v = (radical_inverse(i as u64, primes[k]) + offset[k]).fract();
                u[k] = x[k] + s * standard_normal_quantile(v.clamp(1e-300, 1.0 - 1e-16));
            }
            sum += (beta * g.eval(&u) - shift_log).exp();
        }
        means.push(sum / points as f64);
    }
    let st = crate::stats::stats(&means)?;
    if !(st.mean > 0.0 && st.mean.is_finite()) {
        return Err(Error::EstimationFailure("quasi-Monte Carlo expectation is not positive".into()));
    }
    Ok(HValue {
        h: (shift_log + st.mean.ln()) / beta,
        method: HMethod::QuasiMonteCarlo { points, shifts, se: st.se / (beta * st.mean) },
    })
}

fn first_primes(n: usize) -> Vec<u64> {
    let mut out = Vec::with_capacity(n);
    let mut c = 2u64;
    while out.len() < n {
        if out.iter().all(|p| c % p != 0) {
            out.push(c);
        }
        c += 1;
    }
    out
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let (mut f, mut v) = (inv, 0.0);
    while i > 0 {
        v += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    v
}

const RADIAL_TOL: f64 = 1e-12;

/// `h` for `g(u) = min(|u|, cap)`.
///
/// With `r = |x|`, `|sZ + x|^2 = (s Z_1 + r)^2 + s^2 R^2` where `R` is chi
/// distributed with `d - 1` degrees of freedom, so the expectation is a
/// two-dimensional integral whose kinks are known in closed form.
fn radial_h(params: &KpzParams, cap: f64, t: f64, x: &[f64]) -> Result<HValue> {
    let (beta, d) = (params.beta, params.d);
    let s = (t / d as f64).sqrt();
    let r = x.iter().map(|c| c * c).sum::<f64>().sqrt();
    let shift = beta * r.min(cap);
    let reach = beta * s + (d as f64).sqrt() + 20.0;
    let phi = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let integrand = |norm: f64| (beta * norm.min(cap) - shift).exp();
    let failure: Cell<Option<Error>> = Cell::new(None);

    let mut z_breaks = vec![-reach, reach, -r / s, (cap - r) / s, (-cap - r) / s];
    z_breaks.retain(|b| b.abs() <= reach);
    z_breaks.sort_by(f64::total_cmp);
    z_breaks.dedup();

    let outer = |z: f64| -> f64 {
        let a = s * z + r;
        if d == 1 {
            return phi(z) * integrand(a.abs());
        }
        let k = d - 1;
        let chi = |rho: f64| chi_density(k, rho);
        let f = |rho: f64| chi(rho) * integrand((a * a + s * s * rho * rho).sqrt());
        let mut breaks = vec![0.0, reach];
        if cap > a.abs() {
            let rho_star = (cap * cap - a * a).sqrt() / s;
            if rho_star < reach {
                breaks.insert(1, rho_star);
            }
        }
        let mut sum = 0.0;
        for w in breaks.windows(2) {
            match integrate(f, w[0], w[1], RADIAL_TOL, 0.0) {
                Ok(v) => sum += v,
                Err(e) => {
                    failure.set(Some(e));
                    return 0.0;
                }
            }
        }
        phi(z) * sum
    };
    let mut e = 0.0;
    for w in z_breaks.windows(2) {
        e += integrate(outer, w[0], w[1], RADIAL_TOL, 0.0)?;
        if let Some(err) = failure.take() {
            return Err(err);
        }
    }
    if !(e > 0.0 && e.is_finite()) {
        return Err(Error::EstimationFailure(format!("radial expectation is {e}")));
    }
    Ok(HValue { h: (shift + e.ln()) / beta, method: HMethod::Radial })
}

/// Density of the chi distribution with `k` degrees of freedom.
fn chi_density(k: usize, rho: f64) -> f64 {
    if rho <= 0.0 {
        return if k == 1 { (2.0 / std::f64::consts::PI).sqrt() } else { 0.0 };
    }
    let half_k = k as f64 / 2.0;
    let log_norm = (half_k - 1.0) * std::f64::consts::LN_2 + ln_gamma_half(k);
    ((k as f64 - 1.0) * rho.ln() - 0.5 * rho * rho - log_norm).exp()
}

/// `ln Gamma(k / 2)` for a positive integer `k`.
fn ln_gamma_half(k: usize) -> f64 {
    let (mut v, mut a) = if k % 2 == 0 { (0.0, 1.0) } else { (0.5 * std::f64::consts::PI.ln(), 0.5) };
    while a + 0.5 < k as f64 / 2.0 {
        v += a.ln();
        a += 1.0;
    }
    v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlimRow {
    pub eps: f64,
    pub t_eps: u64,
    pub x_eps: Vec<i64>,
    /// `beta^{-1} log G_eps(t_eps, x_eps)`.
    pub discrete: f64,
    pub h: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlimReport {
    pub rows: Vec<GlimRow>,
    pub method: HMethod,
}

impl GlimReport {
    /// Gap at the smallest `eps` is at most the gap at the largest.
    pub fn endpoints_improve(&self) -> bool {
        match (self.rows.first(), self.rows.last()) {
            (Some(a), Some(b)) => b.gap <= a.gap,
            _ => true,
        }
    }

    pub fn strictly_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].gap < w[0].gap)
    }
}

/// Discrete-to-continuum gap `|beta^{-1} log G_eps(t_eps, x_eps) - h(t, x)|`
/// along a decreasing `eps` ladder.
pub fn glim_check(
    params: &KpzParams,
    g: &InitialCondition,
    eps_list: &[f64],
    t: f64,
    x: &[f64],
) -> Result<GlimReport> {
    if eps_list.is_empty() || eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(invalid("eps ladder must be non-empty and strictly decreasing"));
    }
    if eps_list.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
        return Err(invalid("every eps must lie in (0, 1)"));
    }
    let hv = cole_hopf_h(params, g, t, x)?;
    let mut rows = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let t_eps = time_index(t, eps);
        let x_eps = space_index(x, eps);
        let discrete = log_heat_at(g, eps, params.beta, t_eps, &x_eps)? / params.beta;
        rows.push(GlimRow { eps, t_eps, x_eps, discrete, h: hv.h, gap: (discrete - hv.h).abs() });
    }
    Ok(GlimReport { rows, method: hv.method })
}
