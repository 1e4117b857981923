//! The scaling experiments: sampling the rescaled surface over a shared set
//! of environments and comparing it with the Cole–Hopf solution.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::colehopf::{self, HValue, KpzParams};
use crate::error::{Error, Result};
use crate::harness::config::{estimate_beta0, BetaSpec, ExperimentConfig, RhoConfig};
use crate::noise::{AnchoredNoise, Environment, NoiseLaw};
use crate::polymer::{self, EtaRow, HeightSlab, InitialCondition};
use crate::scaling::{self, ScalingPoint, TestFunction};
use crate::stats::Welford;

/// Where `beta` sits relative to the upper end of the L² regime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaRegime {
    pub rho_hat: f64,
    /// `None` when `mu` stays below `1 / rho_hat` for every tested `beta`.
    pub beta0: Option<f64>,
    pub beta: f64,
}

impl BetaRegime {
    pub fn in_l2(&self) -> bool {
        self.beta0.is_none_or(|b0| self.beta < b0)
    }
}

/// Provenance of the free-energy constant subtracted from the surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtaProvenance {
    pub t_star: u64,
    pub eta: f64,
    pub se: f64,
    /// Replicates behind the estimate; zero when the value was supplied.
    pub replicates: u64,
    pub seed: u64,
}

/// A config with its law, profile, `beta` and `eta` worked out.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub law: NoiseLaw,
    pub g: InitialCondition,
    pub beta: f64,
    pub regime: Option<BetaRegime>,
    pub eta: EtaProvenance,
    /// Full `eta` table when it was estimated here.
    pub eta_rows: Vec<EtaRow>,
}

pub fn resolve_beta(cfg: &ExperimentConfig, law: &NoiseLaw) -> Result<(f64, Option<BetaRegime>)> {
    let rho_cfg = match (cfg.beta, cfg.rho) {
        (BetaSpec::Value(b), None) => return Ok((b, None)),
        (_, rho) => rho.unwrap_or_default(),
    };
    let (rho_hat, b0) = estimate_beta0(law, cfg.d, &rho_cfg)?;
    let beta0 = b0.finite();
    let beta = match cfg.beta {
        BetaSpec::Value(b) => b,
        BetaSpec::Keyword(_) => {
            0.5 * beta0.ok_or_else(|| {
                Error::Config("beta = \"auto\" needs a finite beta_0, but mu stays below 1/rho".into())
            })?
        }
    };
    Ok((beta, Some(BetaRegime { rho_hat, beta0, beta })))
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    cfg.validate()?;
    let law = cfg.law.resolve(None)?;
    let g = cfg.g.build();
    g.validate(cfg.d)?;
    let (beta, regime) = resolve_beta(cfg, &law)?;
    let (eta, eta_rows) = match cfg.eta.value {
        Some(v) => (
            EtaProvenance { t_star: cfg.eta.t_star, eta: v.eta, se: v.se, replicates: 0, seed: cfg.eta.seed },
            Vec::new(),
        ),
        None => {
            let ts = cfg.eta.t_list();
            let rows = polymer::eta_estimate(&law, cfg.d, beta, &ts, cfg.eta.replicates, cfg.eta.seed)?;
            let last = *rows.last().expect("non-empty ladder");
            let prov = EtaProvenance {
                t_star: cfg.eta.t_star,
                eta: last.eta,
                se: last.se,
                replicates: cfg.eta.replicates,
                seed: cfg.eta.seed,
            };
            (prov, rows)
        }
    };
    Ok(Prepared { law, g, beta, regime, eta, eta_rows })
}

fn scaling_point(cfg: &ExperimentConfig, eps: f64) -> Result<ScalingPoint> {
    ScalingPoint::new(cfg.t, &cfg.x, eps, cfg.r_for(eps))
}

/// Initial L1 radius of the slab that leaves every needed site exact at `t_eps`.
pub fn slab_radius(cfg: &ExperimentConfig, eps: f64) -> Result<i64> {
    let sp = scaling_point(cfg, eps)?;
    let mut reach = sp.ball_reach();
    if let Some(phi) = &cfg.phi {
        reach = reach.max(scaling::weak_window_reach(phi, eps, &sp.x_eps));
    }
    Ok(sp.t_eps as i64 + reach)
}

/// Peak bytes at `eps`: two slabs per concurrently running replicate.
pub fn memory_requirement(cfg: &ExperimentConfig, eps: f64, threads: usize) -> Result<u128> {
    Ok(2 * HeightSlab::bytes_for(cfg.d, slab_radius(cfg, eps)?, None) * threads as u128)
}

/// Refuses ladders whose slabs would not fit the configured budget.
pub fn check_budget(cfg: &ExperimentConfig, threads: usize) -> Result<()> {
    let budget = cfg.memory_budget_bytes();
    let mut feasible = Vec::new();
    for &eps in &cfg.eps {
        let need = memory_requirement(cfg, eps, threads)?;
        if need > budget {
            return Err(Error::MemoryBudget(format!(
                "eps = {eps} needs {need} bytes with {threads} threads, budget is {budget}; \
                 largest feasible ladder: {feasible:?}"
            )));
        }
        feasible.push(eps);
    }
    Ok(())
}

/// Surface statistics of one environment at one scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub replicate: u64,
    pub eps: f64,
    pub t_eps: u64,
    pub r: f64,
    /// Ball average of `F_eps(t_eps, .)`.
    pub x_avg: f64,
    pub f_tilde: f64,
    pub f_unsmoothed: f64,
    /// Weak integral against the configured test function.
    pub weak: Option<f64>,
}

fn sample_one(cfg: &ExperimentConfig, prep: &Prepared, replicate: u64, eps: f64) -> Result<Sample> {
    let sp = scaling_point(cfg, eps)?;
    let base = Environment::new(polymer::replicate_seed(cfg.seed, replicate), prep.law.clone(), cfg.d)?;
    // Anchoring at the endpoint makes every scale read the same noise near it.
    let env = AnchoredNoise::new(&base, sp.t_eps, sp.x_eps.clone());
    let slab = HeightSlab::initial(&prep.g, eps, prep.beta, &sp.x_eps, slab_radius(cfg, eps)?, None)?
        .advance(&env, sp.t_eps)?;
    let eta = prep.eta.eta;
    let x_avg = scaling::ball_average(&slab, &sp, &prep.law)?;
    let f_unsmoothed = scaling::unsmoothed_surface(&slab, &sp, &prep.law, eta)?;
    let weak = match &cfg.phi {
        Some(phi) => {
            let norm = polymer::normalizer(cfg.d, &prep.law, prep.beta, sp.t_eps)?;
            let field = |y: &[i64]| slab.beta_f(y).map(|bf| (bf - norm - eta) / prep.beta);
            Some(scaling::weak_integral(&field, phi, eps)?)
        }
        None => None,
    };
    Ok(Sample {
        replicate,
        eps,
        t_eps: sp.t_eps,
        r: sp.r,
        x_avg,
        f_tilde: (x_avg - eta) / prep.beta,
        f_unsmoothed,
        weak,
    })
}

/// Samples every `(replicate, eps)` pair, replicate-major.
///
/// Replicate `j` uses one base environment for the whole ladder.
pub fn sample_experiment(cfg: &ExperimentConfig, prep: &Prepared) -> Result<Vec<Sample>> {
    check_budget(cfg, rayon::current_num_threads())?;
    let jobs: Vec<(u64, f64)> =
        (0..cfg.replicates).flat_map(|j| cfg.eps.iter().map(move |&e| (j, e))).collect();
    jobs.into_par_iter().map(|(j, eps)| sample_one(cfg, prep, j, eps)).collect()
}

fn per_scale<'a>(samples: &'a [Sample], k: usize, scales: usize) -> impl Iterator<Item = &'a Sample> + 'a {
    samples.iter().skip(k).step_by(scales)
}

/// Paired change of a squared error between consecutive scales.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorStep {
    pub eps_from: f64,
    pub eps_to: f64,
    /// Mean of `e_from - e_to` over replicates; positive means improvement.
    pub decrease: f64,
    pub se: f64,
}

impl ErrorStep {
    /// Decrease exceeds three standard errors.
    pub fn significant(&self) -> bool {
        self.decrease > 3.0 * self.se
    }

    /// No increase beyond three standard errors.
    pub fn consistent(&self) -> bool {
        self.decrease > -3.0 * self.se
    }
}

fn error_steps(eps: &[f64], errors: &[Vec<f64>]) -> Result<Vec<ErrorStep>> {
    (1..eps.len())
        .map(|k| {
            let s = errors[k - 1].iter().zip(&errors[k]).map(|(a, b)| a - b).collect::<Welford>().stats()?;
            Ok(ErrorStep { eps_from: eps[k - 1], eps_to: eps[k], decrease: s.mean, se: s.se })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub eps: f64,
    pub t_eps: u64,
    pub r: f64,
    pub mean: f64,
    pub se: f64,
    pub h: f64,
    pub bias: f64,
    /// Population variance of the samples.
    pub variance: f64,
    pub mse: f64,
    pub mse_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
    pub steps: Vec<ErrorStep>,
    pub eta: EtaProvenance,
    pub h: HValue,
}

impl ConvergenceReport {
    /// Every step along the ladder lowers the MSE by more than three se.
    pub fn mse_decreasing(&self) -> bool {
        self.steps.iter().all(ErrorStep::significant)
    }
}

pub fn convergence_report(
    cfg: &ExperimentConfig,
    samples: &[Sample],
    h: HValue,
    eta: EtaProvenance,
) -> Result<ConvergenceReport> {
    let k = cfg.eps.len();
    let mut rows = Vec::with_capacity(k);
    let mut errors = Vec::with_capacity(k);
    for (i, &eps) in cfg.eps.iter().enumerate() {
        let col: Vec<&Sample> = per_scale(samples, i, k).collect();
        let f = col.iter().map(|s| s.f_tilde).collect::<Welford>();
        let fs = f.stats()?;
        let sq: Vec<f64> = col.iter().map(|s| (s.f_tilde - h.h).powi(2)).collect();
        let mse = sq.iter().copied().collect::<Welford>().stats()?;
        rows.push(ConvergenceRow {
            eps,
            t_eps: col[0].t_eps,
            r: col[0].r,
            mean: fs.mean,
            se: fs.se,
            h: h.h,
            bias: fs.mean - h.h,
            variance: f.population_variance(),
            mse: mse.mean,
            mse_se: mse.se,
        });
        errors.push(sq);
    }
    let steps = error_steps(&cfg.eps, &errors)?;
    Ok(ConvergenceReport { rows, steps, eta, h })
}

/// `h(t, x)` at the configured point.
pub fn h_at_point(cfg: &ExperimentConfig, prep: &Prepared) -> Result<HValue> {
    colehopf::cole_hopf_h(&KpzParams::new(cfg.d, prep.beta)?, &prep.g, cfg.t, &cfg.x)
}

pub fn run_theorem_experiment(cfg: &ExperimentConfig) -> Result<ConvergenceReport> {
    let prep = prepare(cfg)?;
    let samples = sample_experiment(cfg, &prep)?;
    convergence_report(cfg, &samples, h_at_point(cfg, &prep)?, prep.eta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorollaryRow {
    pub eps: f64,
    pub t_eps: u64,
    pub mean: f64,
    pub se: f64,
    pub reference: f64,
    /// Mean squared gap to the reference.
    pub sq_gap: f64,
    pub sq_gap_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorollaryReport {
    pub rows: Vec<CorollaryRow>,
    pub steps: Vec<ErrorStep>,
    pub reference: f64,
    pub eta: EtaProvenance,
}

impl CorollaryReport {
    pub fn gap_decreasing(&self) -> bool {
        self.steps.iter().all(ErrorStep::significant)
    }

    /// No step raises the squared gap by more than three se.
    pub fn gap_consistent(&self) -> bool {
        self.steps.iter().all(ErrorStep::consistent)
    }
}

/// `int h(t, x) phi(x) dx` by tensor Gauss–Legendre.
pub fn reference_integral(cfg: &ExperimentConfig, prep: &Prepared, phi: &TestFunction) -> Result<f64> {
    let params = KpzParams::new(cfg.d, prep.beta)?;
    let mut failure = None;
    let value = phi.integrate_against(cfg.reference_order, |u| {
        match colehopf::cole_hopf_h(&params, &prep.g, cfg.t, u) {
            Ok(v) => v.h,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        }
    })?;
    match failure {
        Some(e) => Err(e),
        None => Ok(value),
    }
}

pub fn corollary_report(
    cfg: &ExperimentConfig,
    samples: &[Sample],
    reference: f64,
    eta: EtaProvenance,
) -> Result<CorollaryReport> {
    let k = cfg.eps.len();
    let mut rows = Vec::with_capacity(k);
    let mut errors = Vec::with_capacity(k);
    for (i, &eps) in cfg.eps.iter().enumerate() {
        let col: Vec<&Sample> = per_scale(samples, i, k).collect();
        let vals = col
            .iter()
            .map(|s| s.weak.ok_or_else(|| Error::Config("samples carry no weak integrals".into())))
            .collect::<Result<Vec<f64>>>()?;
        let w = vals.iter().copied().collect::<Welford>().stats()?;
        let sq: Vec<f64> = vals.iter().map(|v| (v - reference).powi(2)).collect();
        let g = sq.iter().copied().collect::<Welford>().stats()?;
        rows.push(CorollaryRow {
            eps,
            t_eps: col[0].t_eps,
            mean: w.mean,
            se: w.se,
            reference,
            sq_gap: g.mean,
            sq_gap_se: g.se,
        });
        errors.push(sq);
    }
    let steps = error_steps(&cfg.eps, &errors)?;
    Ok(CorollaryReport { rows, steps, reference, eta })
}

pub fn run_corollary_experiment(cfg: &ExperimentConfig) -> Result<CorollaryReport> {
    let phi = cfg.phi.as_ref().ok_or_else(|| Error::Config("the weak-integral experiment needs phi".into()))?;
    let prep = prepare(cfg)?;
    let samples = sample_experiment(cfg, &prep)?;
    corollary_report(cfg, &samples, reference_integral(cfg, &prep, phi)?, prep.eta)
}

/// `beta_0` check used by the polymer-side commands, which take `beta` as given.
pub fn regime_for(law: &NoiseLaw, d: usize, beta: f64, rho: &RhoConfig) -> Result<BetaRegime> {
    let (rho_hat, b0) = estimate_beta0(law, d, rho)?;
    Ok(BetaRegime { rho_hat, beta0: b0.finite(), beta })
}
