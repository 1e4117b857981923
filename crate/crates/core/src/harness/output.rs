//! Runnable invocations, CSV output and run manifests.
//!
//! Every run directory holds its CSV files and a `manifest.json` echoing the
//! invocation with all inputs inlined, so [`rerun`] can repeat it from the
//! manifest alone. Floats are written with Rust's shortest round-trip
//! formatting; identical invocations give byte-identical CSVs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::colehopf::{self, KpzParams};
use crate::error::{Error, Result};
use crate::harness::config::{ExperimentConfig, GSpec, LawConfig, RhoConfig};
use crate::harness::experiments::{self, ErrorStep, Prepared};
use crate::noise::{Environment, NoiseLaw};
use crate::polymer::{self, EtaRow, HeightSlab};
use crate::stats::Welford;
use crate::walk::{self, WalkConfig};

/// What a walk run measures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum WalkQuantity {
    /// Return probability with its truncation bracket.
    Rho,
    /// Coincidence counts of walks started at `0` and `offset`.
    Intersections { offset: Vec<i64>, max_k: usize },
    /// Probability that walks from `x` and `y` meet.
    Kappa { x: Vec<i64>, y: Vec<i64> },
    LocalClt { n_list: Vec<u64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkJob {
    pub d: usize,
    pub horizon: u64,
    pub replicates: u64,
    pub seed: u64,
    pub quantity: WalkQuantity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolymerOutput {
    /// `f(t, x)` at every exact site of the final slab, per replicate.
    Sites,
    /// Statistics of `f` and `Z` at the centre for every time step.
    Aggregate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolymerJob {
    pub d: usize,
    pub law: LawConfig,
    pub beta: f64,
    pub g: GSpec,
    pub eps: f64,
    pub t: u64,
    /// L1 radius of the exact region at the final time.
    pub radius: i64,
    pub seed: u64,
    pub replicates: u64,
    pub output: PolymerOutput,
    #[serde(default)]
    pub rho: Option<RhoConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColehopfJob {
    pub d: usize,
    pub beta: f64,
    pub g: GSpec,
    pub t: f64,
    pub x: Vec<f64>,
    pub eps: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtaJob {
    pub d: usize,
    pub law: LawConfig,
    pub beta: f64,
    pub t_list: Vec<u64>,
    pub replicates: u64,
    pub seed: u64,
    #[serde(default)]
    pub rho: Option<RhoConfig>,
}

/// A complete, self-describing run request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", content = "params", rename_all = "kebab-case")]
pub enum Invocation {
    Walk(WalkJob),
    Polymer(PolymerJob),
    Colehopf(ColehopfJob),
    Eta(EtaJob),
    Scale(ExperimentConfig),
    Theorem(ExperimentConfig),
    Corollary(ExperimentConfig),
}

impl Invocation {
    pub fn command(&self) -> &'static str {
        match self {
            Invocation::Walk(_) => "walk",
            Invocation::Polymer(_) => "polymer",
            Invocation::Colehopf(_) => "colehopf",
            Invocation::Eta(_) => "eta",
            Invocation::Scale(_) => "scale",
            Invocation::Theorem(_) => "theorem",
            Invocation::Corollary(_) => "corollary",
        }
    }

    /// Replaces file-backed laws by their tables and drops the output path,
    /// which is not part of what is computed.
    fn normalized(&self) -> Result<Self> {
        let inline = |law: &LawConfig| -> Result<LawConfig> { Ok(LawConfig::inline(&law.resolve(None)?)) };
        let mut inv = self.clone();
        match &mut inv {
            Invocation::Walk(_) | Invocation::Colehopf(_) => {}
            Invocation::Polymer(job) => job.law = inline(&job.law)?,
            Invocation::Eta(job) => job.law = inline(&job.law)?,
            Invocation::Scale(cfg) | Invocation::Theorem(cfg) | Invocation::Corollary(cfg) => {
                cfg.law = inline(&cfg.law)?;
                cfg.output = None;
            }
        }
        Ok(inv)
    }

    fn seeds(&self) -> BTreeMap<String, u64> {
        let mut s = BTreeMap::new();
        match self {
            Invocation::Walk(job) => {
                s.insert("walk".into(), job.seed);
            }
            Invocation::Polymer(job) => {
                s.insert("environment".into(), job.seed);
                if let Some(rho) = job.rho {
                    s.insert("rho".into(), rho.seed);
                }
            }
            Invocation::Colehopf(_) => {}
            Invocation::Eta(job) => {
                s.insert("environment".into(), job.seed);
                if let Some(rho) = job.rho {
                    s.insert("rho".into(), rho.seed);
                }
            }
            Invocation::Scale(cfg) | Invocation::Theorem(cfg) | Invocation::Corollary(cfg) => {
                s.insert("environment".into(), cfg.seed);
                if cfg.eta.value.is_none() {
                    s.insert("eta".into(), cfg.eta.seed);
                }
                if let Some(rho) = cfg.rho {
                    s.insert("rho".into(), rho.seed);
                }
            }
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub invocation: Invocation,
    pub versions: BTreeMap<String, String>,
    pub seeds: BTreeMap<String, u64>,
    pub wall_time_s: f64,
    pub files: Vec<String>,
    pub notes: Vec<String>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Rows of one CSV file, kept as strings until written.
struct Table {
    name: &'static str,
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new(name: &'static str, header: &[&str]) -> Self {
        Self { name, header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    fn with_axes(name: &'static str, before: &[&str], axis: &str, d: usize, after: &[&str]) -> Self {
        let mut header: Vec<String> = before.iter().map(|s| s.to_string()).collect();
        header.extend((1..=d).map(|i| format!("{axis}{i}")));
        header.extend(after.iter().map(|s| s.to_string()));
        Self { name, header, rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    fn write(&self, dir: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(dir.join(self.name))?;
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn s<T: ToString>(v: T) -> String {
    v.to_string()
}

fn coords<T: ToString>(v: &[T]) -> impl Iterator<Item = String> + '_ {
    v.iter().map(|c| c.to_string())
}

struct Outcome {
    tables: Vec<Table>,
    notes: Vec<String>,
}

/// Runs an invocation, writing its CSVs and manifest into `out_dir`.
pub fn execute(invocation: &Invocation, out_dir: &Path) -> Result<Manifest> {
    let invocation = invocation.normalized()?;
    let started = Instant::now();
    let outcome = match &invocation {
        Invocation::Walk(job) => run_walk(job)?,
        Invocation::Polymer(job) => run_polymer(job)?,
        Invocation::Colehopf(job) => run_colehopf(job)?,
        Invocation::Eta(job) => run_eta(job)?,
        Invocation::Scale(cfg) => run_scale(cfg)?,
        Invocation::Theorem(cfg) => run_theorem(cfg)?,
        Invocation::Corollary(cfg) => run_corollary(cfg)?,
    };
    fs::create_dir_all(out_dir)?;
    for t in &outcome.tables {
        t.write(out_dir)?;
    }
    let mut versions = BTreeMap::new();
    versions.insert("dpkpz".to_string(), env!("CARGO_PKG_VERSION").to_string());
    let manifest = Manifest {
        seeds: invocation.seeds(),
        invocation,
        versions,
        wall_time_s: started.elapsed().as_secs_f64(),
        files: outcome.tables.iter().map(|t| t.name.to_string()).collect(),
        notes: outcome.notes,
    };
    fs::write(out_dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// Re-executes the run recorded in a manifest (a file, or a run directory).
pub fn rerun(manifest: &Path, out_dir: &Path) -> Result<Manifest> {
    let path: PathBuf = if manifest.is_dir() { manifest.join(MANIFEST_FILE) } else { manifest.to_path_buf() };
    execute(&read_manifest(&path)?.invocation, out_dir)
}

fn regime_note(law: &NoiseLaw, d: usize, beta: f64, rho: Option<RhoConfig>) -> Result<Vec<String>> {
    let Some(rho) = rho else { return Ok(Vec::new()) };
    let reg = experiments::regime_for(law, d, beta, &rho)?;
    Ok(vec![regime_text(&reg)])
}

fn regime_text(reg: &experiments::BetaRegime) -> String {
    let b0 = reg.beta0.map_or("infinite".to_string(), |b| b.to_string());
    if reg.in_l2() {
        format!("beta = {} is inside the L2 regime (rho_hat = {}, beta_0 = {b0})", reg.beta, reg.rho_hat)
    } else {
        format!(
            "warning: beta = {} is at or above beta_0 = {b0} (rho_hat = {}); the normalized partition \
             function need not have a bounded second moment",
            reg.beta, reg.rho_hat
        )
    }
}

fn run_walk(job: &WalkJob) -> Result<Outcome> {
    let cfg = WalkConfig::new(job.d, job.horizon, job.replicates, job.seed)?;
    let mut t = Table::new("walk.csv", &["quantity", "d", "horizon", "param", "estimate", "se", "n"]);
    let head = |q: &str, param: String| vec![s(q), s(job.d), s(job.horizon), param];
    let n = s(job.replicates);
    match &job.quantity {
        WalkQuantity::Rho => {
            let est = walk::rho_d(&cfg)?;
            let mut r = head("rho", String::new());
            r.extend([s(est.stats.mean), s(est.stats.se), n.clone()]);
            t.push(r);
            let mut r = head("rho-bracket", format!("tail_constant={}", est.tail_constant));
            r.extend([s(est.bracket), String::new(), n.clone()]);
            t.push(r);
        }
        WalkQuantity::Intersections { offset, max_k } => {
            let samples = walk::collect_intersections(&cfg, offset, &[])?;
            let param = coords(offset).collect::<Vec<_>>().join(";");
            let counts = samples.iter().map(|x| x.counts[0] as f64).collect::<Welford>().stats()?;
            let mut r = head("mean-count", format!("offset={param}"));
            r.extend([s(counts.mean), s(counts.se), n.clone()]);
            t.push(r);
            let m = job.replicates as f64;
            for (k, p) in walk::count_pmf(&samples, 0, *max_k).into_iter().enumerate() {
                let mut r = head("count-pmf", format!("offset={param};k={k}"));
                r.extend([s(p), s((p * (1.0 - p) / m).sqrt()), n.clone()]);
                t.push(r);
            }
        }
        WalkQuantity::Kappa { x, y } => {
            let k = walk::kappa_hat(&cfg, x, y)?;
            let param = format!(
                "x={};y={}",
                coords(x).collect::<Vec<_>>().join(";"),
                coords(y).collect::<Vec<_>>().join(";")
            );
            let mut r = head("kappa", param);
            r.extend([s(k.mean), s(k.se), n.clone()]);
            t.push(r);
        }
        WalkQuantity::LocalClt { n_list } => {
            let scale = |n: u64| (n as f64).powf(job.d as f64 / 2.0);
            for row in walk::local_clt_check(&cfg, n_list)? {
                let mut r = head("local-clt", format!("n={}", row.n));
                r.extend([s(row.scaled), s(row.se * scale(row.n)), n.clone()]);
                t.push(r);
            }
        }
    }
    Ok(Outcome { tables: vec![t], notes: Vec::new() })
}

fn run_polymer(job: &PolymerJob) -> Result<Outcome> {
    if job.d == 0 || job.replicates == 0 || job.radius < 0 {
        return Err(Error::InvalidInput("polymer runs need d >= 1, replicates >= 1 and radius >= 0".into()));
    }
    let law = job.law.resolve(None)?;
    let g = job.g.build();
    let center = vec![0i64; job.d];
    let start = job.radius + job.t as i64;
    let per_rep: Vec<(Vec<f64>, HeightSlab)> = (0..job.replicates)
        .into_par_iter()
        .map(|j| {
            let env = Environment::new(polymer::replicate_seed(job.seed, j), law.clone(), job.d)?;
            let mut slab = HeightSlab::initial(&g, job.eps, job.beta, &center, start, None)?;
            let mut trace = Vec::with_capacity(job.t as usize);
            for _ in 0..job.t {
                slab = slab.step(&env)?;
                trace.push(slab.beta_f(&center).expect("centre stays exact"));
            }
            Ok((trace, slab))
        })
        .collect::<Result<_>>()?;

    let table = match job.output {
        PolymerOutput::Sites => {
            let mut t = Table::with_axes("sites.csv", &["replicate", "t"], "x", job.d, &["f"]);
            for (j, (_, slab)) in per_rep.iter().enumerate() {
                slab.layout().for_each_site(|i, x| {
                    let mut r = vec![s(j), s(job.t)];
                    r.extend(coords(x));
                    r.push(s(slab.values()[i] / job.beta));
                    t.push(r);
                });
            }
            t
        }
        PolymerOutput::Aggregate => {
            let mut t = Table::new(
                "aggregate.csv",
                &["t", "f_mean", "f_se", "log_z_mean", "log_z_se", "z_mean", "z_se", "n"],
            );
            for k in 0..job.t as usize {
                let step = k as u64 + 1;
                let norm = polymer::normalizer(job.d, &law, job.beta, step)?;
                let mut f = Welford::new();
                let mut lz = Welford::new();
                let mut z = Welford::new();
                for (trace, _) in &per_rep {
                    f.push(trace[k] / job.beta);
                    lz.push(trace[k] - norm);
                    z.push((trace[k] - norm).exp());
                }
                let (f, lz, z) = (f.stats()?, lz.stats()?, z.stats()?);
                t.push(vec![
                    s(step),
                    s(f.mean),
                    s(f.se),
                    s(lz.mean),
                    s(lz.se),
                    s(z.mean),
                    s(z.se),
                    s(job.replicates),
                ]);
            }
            t
        }
    };
    Ok(Outcome { tables: vec![table], notes: regime_note(&law, job.d, job.beta, job.rho)? })
}

fn run_colehopf(job: &ColehopfJob) -> Result<Outcome> {
    let params = KpzParams::new(job.d, job.beta)?;
    let report = colehopf::glim_check(&params, &job.g.build(), &job.eps, job.t, &job.x)?;
    let mut t = Table::with_axes(
        "colehopf.csv",
        &["eps", "t", "t_eps"],
        "x",
        job.d,
        &["discrete_value", "continuum_value", "gap"],
    );
    for row in &report.rows {
        let mut r = vec![s(row.eps), s(job.t), s(row.t_eps)];
        r.extend(coords(&job.x));
        r.extend([s(row.discrete), s(row.h), s(row.gap)]);
        t.push(r);
    }
    let notes = vec![format!("continuum value method: {}", serde_json::to_string(&report.method)?)];
    Ok(Outcome { tables: vec![t], notes })
}

fn eta_table(rows: &[EtaRow], replicates: u64) -> Table {
    let mut t = Table::new("eta.csv", &["t", "eta", "se", "plain_mean", "plain_se", "n"]);
    for r in rows {
        t.push(vec![s(r.t), s(r.eta), s(r.se), s(r.plain_mean), s(r.plain_se), s(replicates)]);
    }
    t
}

fn run_eta(job: &EtaJob) -> Result<Outcome> {
    let law = job.law.resolve(None)?;
    let rows = polymer::eta_estimate(&law, job.d, job.beta, &job.t_list, job.replicates, job.seed)?;
    Ok(Outcome { tables: vec![eta_table(&rows, job.replicates)], notes: regime_note(&law, job.d, job.beta, job.rho)? })
}

fn experiment_notes(prep: &Prepared) -> Vec<String> {
    let e = &prep.eta;
    let mut notes = vec![if e.replicates == 0 {
        format!("eta = {} (se {}) supplied for t* = {}", e.eta, e.se, e.t_star)
    } else {
        format!("eta = {} (se {}) estimated at t* = {} from {} replicates", e.eta, e.se, e.t_star, e.replicates)
    }];
    notes.push(format!("beta = {}", prep.beta));
    if let Some(reg) = &prep.regime {
        notes.push(regime_text(reg));
    }
    notes
}

fn push_eta(tables: &mut Vec<Table>, prep: &Prepared) {
    if !prep.eta_rows.is_empty() {
        tables.push(eta_table(&prep.eta_rows, prep.eta.replicates));
    }
}

fn steps_table(steps: &[ErrorStep]) -> Table {
    let mut t = Table::new("steps.csv", &["eps_from", "eps_to", "decrease", "se", "significant"]);
    for st in steps {
        t.push(vec![s(st.eps_from), s(st.eps_to), s(st.decrease), s(st.se), s(st.significant())]);
    }
    t
}

fn run_scale(cfg: &ExperimentConfig) -> Result<Outcome> {
    let prep = experiments::prepare(cfg)?;
    let samples = experiments::sample_experiment(cfg, &prep)?;
    let mut t = Table::with_axes(
        "scale.csv",
        &["replicate", "eps", "t", "t_eps", "r"],
        "x",
        cfg.d,
        &["f_tilde", "f_unsmoothed", "X"],
    );
    for sm in &samples {
        let mut r = vec![s(sm.replicate), s(sm.eps), s(cfg.t), s(sm.t_eps), s(sm.r)];
        r.extend(coords(&cfg.x));
        r.extend([s(sm.f_tilde), s(sm.f_unsmoothed), s(sm.x_avg)]);
        t.push(r);
    }
    let mut tables = vec![t];
    push_eta(&mut tables, &prep);
    Ok(Outcome { tables, notes: experiment_notes(&prep) })
}

fn run_theorem(cfg: &ExperimentConfig) -> Result<Outcome> {
    let prep = experiments::prepare(cfg)?;
    let samples = experiments::sample_experiment(cfg, &prep)?;
    let h = experiments::h_at_point(cfg, &prep)?;
    let report = experiments::convergence_report(cfg, &samples, h, prep.eta)?;

    let mut conv = Table::new(
        "convergence.csv",
        &["eps", "t_eps", "r", "mean", "se", "h", "bias", "variance", "mse", "mse_se"],
    );
    for r in &report.rows {
        conv.push(vec![
            s(r.eps),
            s(r.t_eps),
            s(r.r),
            s(r.mean),
            s(r.se),
            s(r.h),
            s(r.bias),
            s(r.variance),
            s(r.mse),
            s(r.mse_se),
        ]);
    }
    let mut smp = Table::new("samples.csv", &["replicate", "eps", "t_eps", "r", "X", "f_tilde", "f_unsmoothed"]);
    for sm in &samples {
        smp.push(vec![s(sm.replicate), s(sm.eps), s(sm.t_eps), s(sm.r), s(sm.x_avg), s(sm.f_tilde), s(sm.f_unsmoothed)]);
    }
    let mut tables = vec![conv, steps_table(&report.steps), smp];
    push_eta(&mut tables, &prep);
    let mut notes = experiment_notes(&prep);
    notes.push(format!("h method: {}", serde_json::to_string(&report.h.method)?));
    Ok(Outcome { tables, notes })
}

fn run_corollary(cfg: &ExperimentConfig) -> Result<Outcome> {
    let phi = cfg.phi.as_ref().ok_or_else(|| Error::Config("the corollary experiment needs phi".into()))?;
    let prep = experiments::prepare(cfg)?;
    let samples = experiments::sample_experiment(cfg, &prep)?;
    let reference = experiments::reference_integral(cfg, &prep, phi)?;
    let report = experiments::corollary_report(cfg, &samples, reference, prep.eta)?;

    let mut main = Table::new("corollary.csv", &["eps", "t_eps", "mean", "se", "reference", "sq_gap", "sq_gap_se"]);
    for r in &report.rows {
        main.push(vec![s(r.eps), s(r.t_eps), s(r.mean), s(r.se), s(r.reference), s(r.sq_gap), s(r.sq_gap_se)]);
    }
    let mut smp = Table::new("samples.csv", &["replicate", "eps", "t_eps", "weak_integral"]);
    for sm in &samples {
        smp.push(vec![s(sm.replicate), s(sm.eps), s(sm.t_eps), s(sm.weak.expect("phi is set"))]);
    }
    let mut tables = vec![main, steps_table(&report.steps), smp];
    push_eta(&mut tables, &prep);
    Ok(Outcome { tables, notes: experiment_notes(&prep) })
}
