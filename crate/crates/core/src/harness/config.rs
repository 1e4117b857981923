//! Experiment configuration, read from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{self, NoiseLaw, TabulatedMap};
use crate::polymer::InitialCondition;
use crate::scaling::{self, TestFunction};
use crate::walk::{self, WalkConfig};

/// Noise law as written in a config file.
///
/// `lipschitz-csv` names a two-column `grid,value` file; relative paths are
/// resolved against the directory of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LawConfig {
    StandardGaussian,
    AffineGaussian { scale: f64, shift: f64 },
    LipschitzMap { grid: Vec<f64>, values: Vec<f64>, lipschitz: f64 },
    LipschitzCsv { path: PathBuf, lipschitz: f64 },
}

impl LawConfig {
    pub fn resolve(&self, base_dir: Option<&Path>) -> Result<NoiseLaw> {
        let law = match self {
            LawConfig::StandardGaussian => NoiseLaw::StandardGaussian,
            LawConfig::AffineGaussian { scale, shift } => NoiseLaw::AffineGaussian { scale: *scale, shift: *shift },
            LawConfig::LipschitzMap { grid, values, lipschitz } => {
                NoiseLaw::LipschitzMap(TabulatedMap::new(grid.clone(), values.clone(), *lipschitz)?)
            }
            LawConfig::LipschitzCsv { path, lipschitz } => {
                let full = match base_dir {
                    Some(dir) if path.is_relative() => dir.join(path),
                    _ => path.clone(),
                };
                NoiseLaw::LipschitzMap(TabulatedMap::from_csv_path(&full, *lipschitz)?)
            }
        };
        law.validate()?;
        Ok(law)
    }

    /// Self-contained form of a resolved law, used when echoing a run.
    pub fn inline(law: &NoiseLaw) -> Self {
        match law {
            NoiseLaw::StandardGaussian => LawConfig::StandardGaussian,
            NoiseLaw::AffineGaussian { scale, shift } => LawConfig::AffineGaussian { scale: *scale, shift: *shift },
            NoiseLaw::LipschitzMap(map) => LawConfig::LipschitzMap {
                grid: map.grid().to_vec(),
                values: map.values().to_vec(),
                lipschitz: law.lipschitz_constant(),
            },
        }
    }
}

/// Initial profiles that can be named in a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GSpec {
    Zero,
    Constant { value: f64 },
    Linear { a: Vec<f64> },
    CappedNorm { cap: f64 },
}

impl GSpec {
    pub fn build(&self) -> InitialCondition {
        match self {
            GSpec::Zero => InitialCondition::Zero,
            GSpec::Constant { value } => InitialCondition::Constant(*value),
            GSpec::Linear { a } => InitialCondition::Linear(a.clone()),
            GSpec::CappedNorm { cap } => InitialCondition::CappedNorm { cap: *cap },
        }
    }
}

/// Inverse temperature, either fixed or half of the estimated `beta_0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BetaSpec {
    Value(f64),
    Keyword(BetaKeyword),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BetaKeyword {
    Auto,
}

/// Return-probability run used to place `beta` relative to `beta_0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RhoConfig {
    #[serde(default = "default_rho_horizon")]
    pub horizon: u64,
    #[serde(default = "default_rho_replicates")]
    pub replicates: u64,
    #[serde(default)]
    pub seed: u64,
}

fn default_rho_horizon() -> u64 {
    10_000
}

fn default_rho_replicates() -> u64 {
    100_000
}

impl Default for RhoConfig {
    fn default() -> Self {
        Self { horizon: default_rho_horizon(), replicates: default_rho_replicates(), seed: 0 }
    }
}

/// A free-energy value supplied instead of estimated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedEta {
    pub eta: f64,
    pub se: f64,
}

/// How the free-energy constant `eta` is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EtaConfig {
    #[serde(default = "default_t_star")]
    pub t_star: u64,
    #[serde(default = "default_eta_replicates")]
    pub replicates: u64,
    #[serde(default = "default_eta_seed")]
    pub seed: u64,
    /// Skip estimation and use this value.
    #[serde(default)]
    pub value: Option<FixedEta>,
}

fn default_t_star() -> u64 {
    64
}

fn default_eta_replicates() -> u64 {
    10_000
}

fn default_eta_seed() -> u64 {
    0xe7a
}

impl Default for EtaConfig {
    fn default() -> Self {
        Self {
            t_star: default_t_star(),
            replicates: default_eta_replicates(),
            seed: default_eta_seed(),
            value: None,
        }
    }
}

impl EtaConfig {
    /// Doubling ladder `1, 2, 4, .., t_star` (with `t_star` appended if it is
    /// not a power of two).
    pub fn t_list(&self) -> Vec<u64> {
        let mut ts = Vec::new();
        let mut t = 1;
        while t < self.t_star {
            ts.push(t);
            t *= 2;
        }
        ts.push(self.t_star);
        ts
    }
}

/// Scaling experiment: one macroscopic point, an `eps` ladder and `M`
/// environments shared across the ladder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub d: usize,
    #[serde(default = "default_law")]
    pub law: LawConfig,
    pub beta: BetaSpec,
    pub g: GSpec,
    pub t: f64,
    pub x: Vec<f64>,
    pub eps: Vec<f64>,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_c")]
    pub c: f64,
    pub replicates: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default = "default_budget")]
    pub memory_budget_gb: f64,
    #[serde(default)]
    pub eta: EtaConfig,
    #[serde(default)]
    pub rho: Option<RhoConfig>,
    /// Test function for the weak-integral experiment.
    #[serde(default)]
    pub phi: Option<TestFunction>,
    /// Gauss–Legendre order per axis for the reference integral of `h phi`.
    #[serde(default = "default_reference_order")]
    pub reference_order: usize,
}

fn default_law() -> LawConfig {
    LawConfig::StandardGaussian
}

fn default_gamma() -> f64 {
    0.5
}

fn default_c() -> f64 {
    1.0
}

fn default_budget() -> f64 {
    8.0
}

fn default_reference_order() -> usize {
    24
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; a `lipschitz-csv` law is inlined so the returned
    /// config no longer depends on the file's location.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml_str(&text)?;
        let law = cfg.law.resolve(path.parent())?;
        cfg.law = LawConfig::inline(&law);
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.d < 3 {
            return bad(format!("d must be at least 3, got {}", self.d));
        }
        if self.replicates < 2 {
            return bad(format!("need at least 2 replicates, got {}", self.replicates));
        }
        if self.eps.is_empty() || self.eps.windows(2).any(|w| w[1] >= w[0]) {
            return bad("eps list must be non-empty and strictly decreasing".into());
        }
        if self.eps.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
            return bad("every eps must lie in (0, 1)".into());
        }
        if self.x.len() != self.d {
            return bad(format!("x has {} coordinates, expected {}", self.x.len(), self.d));
        }
        if !(self.t > 0.0 && self.t.is_finite()) {
            return bad(format!("t must be positive, got {}", self.t));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) || !(self.c > 0.0) {
            return bad("gamma must lie in (0, 1) and c must be positive".into());
        }
        if !(self.memory_budget_gb > 0.0) {
            return bad("memory budget must be positive".into());
        }
        if self.eta.t_star == 0 || self.eta.replicates < 2 {
            return bad("eta needs t_star >= 1 and at least 2 replicates".into());
        }
        if let BetaSpec::Value(b) = self.beta {
            if !(b > 0.0 && b.is_finite()) {
                return bad(format!("beta must be positive, got {b}"));
            }
        }
        if let GSpec::Linear { a } = &self.g {
            if a.len() != self.d {
                return bad(format!("linear g has {} coefficients, expected {}", a.len(), self.d));
            }
        }
        if let Some(phi) = &self.phi {
            phi.validate(self.d)?;
        }
        for &eps in &self.eps {
            let r = self.r_for(eps);
            if r >= 1.0 / eps {
                return bad(format!("smoothing radius {r} is not below 1/eps at eps = {eps}"));
            }
            if scaling::time_index(self.t, eps) == 0 {
                return bad(format!("t = {} is below one lattice step at eps = {eps}", self.t));
            }
        }
        Ok(())
    }

    pub fn r_for(&self, eps: f64) -> f64 {
        scaling::r_schedule(eps, self.gamma, self.c)
    }

    pub fn memory_budget_bytes(&self) -> u128 {
        (self.memory_budget_gb * 1e9) as u128
    }
}

/// `beta_0` from a fresh return-probability estimate.
pub fn estimate_beta0(law: &NoiseLaw, d: usize, rho: &RhoConfig) -> Result<(f64, noise::Beta0)> {
    let est = walk::rho_d(&WalkConfig::new(d, rho.horizon, rho.replicates, rho.seed)?)?;
    let rho_hat = est.stats.mean;
    Ok((rho_hat, noise::beta0(law, rho_hat)?))
}
