//! Noise laws and the reproducible environment field.
//!
//! Admissible laws are pushforwards of a standard Gaussian under a Lipschitz
//! map. Three concrete kinds are provided: the standard Gaussian, an affine
//! image of it, and a tabulated monotone piecewise-linear map.
//!
//! The environment never stores noise. A site value is computed on demand by
//! hashing `(seed, t, x)` to a uniform, applying the Gaussian quantile, and
//! then the law's map, so any region of space-time can be regenerated exactly.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::mix;
use crate::quadrature;

/// Relative tolerance used for quadrature-based moment generating functions.
pub const MGF_REL_TOL: f64 = 1e-10;
/// Largest inverse temperature probed by [`beta0`].
pub const BETA0_CAP: f64 = 64.0;
/// Absolute tolerance of the [`beta0`] bisection.
pub const BETA0_TOL: f64 = 1e-9;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Monotone piecewise-linear map sampled on a strictly increasing grid and
/// extended linearly beyond both ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMap")]
pub struct TabulatedMap {
    grid: Vec<f64>,
    values: Vec<f64>,
    lipschitz: f64,
}

#[derive(Deserialize)]
struct RawMap {
    grid: Vec<f64>,
    values: Vec<f64>,
    lipschitz: f64,
}

impl TryFrom<RawMap> for TabulatedMap {
    type Error = Error;
    fn try_from(raw: RawMap) -> Result<Self> {
        TabulatedMap::new(raw.grid, raw.values, raw.lipschitz)
    }
}

impl TabulatedMap {
    /// Validates the table: at least two points, strictly increasing grid,
    /// monotone values, and every slope bounded by `lipschitz`.
    pub fn new(grid: Vec<f64>, values: Vec<f64>, lipschitz: f64) -> Result<Self> {
        if grid.len() < 2 || grid.len() != values.len() {
            return Err(invalid("tabulated map needs at least two (grid, value) pairs"));
        }
        if !(lipschitz > 0.0 && lipschitz.is_finite()) {
            return Err(invalid("lipschitz constant must be positive and finite"));
        }
        if grid.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(invalid("tabulated map contains non-finite entries"));
        }
        let mut sign = 0.0f64;
        for i in 1..grid.len() {
            let dz = grid[i] - grid[i - 1];
            if dz <= 0.0 {
                return Err(invalid(format!("grid not strictly increasing at index {i}")));
            }
            let slope = (values[i] - values[i - 1]) / dz;
            if slope.abs() > lipschitz * (1.0 + 1e-12) {
                return Err(invalid(format!(
                    "slope {slope} on segment {i} exceeds lipschitz constant {lipschitz}"
                )));
            }
            if slope != 0.0 {
                if sign != 0.0 && slope.signum() != sign {
                    return Err(invalid("tabulated map is not monotone"));
                }
                sign = slope.signum();
            }
        }
        Ok(Self { grid, values, lipschitz })
    }

    /// Reads a two-column CSV `grid,value`. A non-numeric first line is
    /// treated as a header.
    pub fn from_csv_str(text: &str, lipschitz: f64) -> Result<Self> {
        let mut grid = Vec::new();
        let mut values = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut cols = line.split(',').map(str::trim);
            let (a, b) = match (cols.next(), cols.next()) {
                (Some(a), Some(b)) => (a, b),
                _ => return Err(invalid(format!("line {}: expected two columns", lineno + 1))),
            };
            match (a.parse::<f64>(), b.parse::<f64>()) {
                (Ok(z), Ok(v)) => {
                    grid.push(z);
                    values.push(v);
                }
                _ if grid.is_empty() && lineno == 0 => continue,
                _ => return Err(invalid(format!("line {}: unparsable number", lineno + 1))),
            }
        }
        Self::new(grid, values, lipschitz)
    }

    pub fn from_csv_path(path: &Path, lipschitz: f64) -> Result<Self> {
        Self::from_csv_str(&std::fs::read_to_string(path)?, lipschitz)
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn slope(&self, segment: usize) -> f64 {
        (self.values[segment + 1] - self.values[segment]) / (self.grid[segment + 1] - self.grid[segment])
    }

    /// Evaluates the map, extrapolating linearly outside the grid.
    pub fn eval(&self, z: f64) -> f64 {
        let n = self.grid.len();
        let seg = match self.grid.partition_point(|&g| g <= z) {
            0 => 0,
            k if k >= n => n - 2,
            k => k - 1,
        };
        self.values[seg] + self.slope(seg) * (z - self.grid[seg])
    }
}

/// A law in the admissible class: the image of a standard Gaussian under a
/// Lipschitz map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NoiseLaw {
    StandardGaussian,
    AffineGaussian { scale: f64, shift: f64 },
    LipschitzMap(TabulatedMap),
}

impl NoiseLaw {
    pub fn affine(scale: f64, shift: f64) -> Result<Self> {
        let law = NoiseLaw::AffineGaussian { scale, shift };
        law.validate()?;
        Ok(law)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            NoiseLaw::StandardGaussian | NoiseLaw::LipschitzMap(_) => Ok(()),
            NoiseLaw::AffineGaussian { scale, shift } => {
                if *scale == 0.0 || !scale.is_finite() || !shift.is_finite() {
                    Err(invalid("affine gaussian needs a finite non-zero scale and finite shift"))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Lipschitz constant of the defining map.
    pub fn lipschitz_constant(&self) -> f64 {
        match self {
            NoiseLaw::StandardGaussian => 1.0,
            NoiseLaw::AffineGaussian { scale, .. } => scale.abs(),
            NoiseLaw::LipschitzMap(map) => map.lipschitz,
        }
    }

    /// Pushes a standard Gaussian value through the law's map.
    #[inline]
    pub fn transform(&self, z: f64) -> f64 {
        match self {
            NoiseLaw::StandardGaussian => z,
            NoiseLaw::AffineGaussian { scale, shift } => scale * z + shift,
            NoiseLaw::LipschitzMap(map) => map.eval(z),
        }
    }

    /// Points where the map may fail to be smooth.
    fn breakpoints(&self) -> &[f64] {
        match self {
            NoiseLaw::LipschitzMap(map) => &map.grid,
            _ => &[],
        }
    }

    fn name(&self) -> &'static str {
        match self {
            NoiseLaw::StandardGaussian => "standard-gaussian",
            NoiseLaw::AffineGaussian { .. } => "affine-gaussian",
            NoiseLaw::LipschitzMap(_) => "lipschitz-map",
        }
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if beta >= 0.0 && beta.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("beta must be finite and non-negative, got {beta}")))
    }
}

/// `log m(beta)`, closed form for the Gaussian kinds and quadrature otherwise.
pub fn log_mgf(law: &NoiseLaw, beta: f64) -> Result<f64> {
    check_beta(beta)?;
    match law {
        NoiseLaw::StandardGaussian => Ok(0.5 * beta * beta),
        NoiseLaw::AffineGaussian { scale, shift } => Ok(shift * beta + 0.5 * scale * scale * beta * beta),
        NoiseLaw::LipschitzMap(_) => log_mgf_by_quadrature(law, beta),
    }
}

/// Moment generating function `m(beta) = E exp(beta * xi)`.
pub fn mgf(law: &NoiseLaw, beta: f64) -> Result<f64> {
    Ok(log_mgf(law, beta)?.exp())
}

/// `m(beta)` by quadrature against the Gaussian density regardless of kind.
pub fn mgf_by_quadrature(law: &NoiseLaw, beta: f64) -> Result<f64> {
    Ok(log_mgf_by_quadrature(law, beta)?.exp())
}

/// Integrates `exp(beta * phi(z) - z^2/2)` piecewise between the map's kinks,
/// after factoring out the integrand's maximum so large `beta` cannot overflow.
pub fn log_mgf_by_quadrature(law: &NoiseLaw, beta: f64) -> Result<f64> {
    check_beta(beta)?;
    law.validate()?;
    let exponent = |z: f64| beta * law.transform(z) - 0.5 * z * z;
    let k = law.lipschitz_constant();
    // Beyond |z| >= 2*beta*K + 40 the integrand is below exp(-800) of its peak.
    let reach = 2.0 * beta * k + 40.0;
    let (lo, hi) = (-reach, reach);

    let mut cuts = vec![lo];
    cuts.extend(law.breakpoints().iter().copied().filter(|&z| z > lo && z < hi));
    cuts.push(hi);

    // Peak of a concave-per-segment exponent: segment endpoints and interior
    // stationary points beta * slope.
    let mut peak = f64::NEG_INFINITY;
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let mid = 0.5 * (a + b);
        let slope = (law.transform(b) - law.transform(a)) / (b - a);
        for z in [a, b, (beta * slope).clamp(a, b), mid] {
            peak = peak.max(exponent(z));
        }
    }

    let mut total = 0.0;
    for w in cuts.windows(2) {
        total += quadrature::integrate(
            |z| (exponent(z) - peak).exp(),
            w[0],
            w[1],
            MGF_REL_TOL * 0.1,
            1e-300,
        )
        .map_err(|e| Error::EstimationFailure(format!("mgf of {} at beta={beta}: {e}", law.name())))?;
    }
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::EstimationFailure(format!(
            "mgf quadrature of {} at beta={beta} produced {total}",
            law.name()
        )));
    }
    Ok(peak + total.ln() - LN_SQRT_2PI)
}

/// `log mu(beta) = log m(2 beta) - 2 log m(beta)`.
pub fn log_mu(law: &NoiseLaw, beta: f64) -> Result<f64> {
    Ok(log_mgf(law, 2.0 * beta)? - 2.0 * log_mgf(law, beta)?)
}

/// `mu(beta) = m(2 beta) / m(beta)^2`, at least 1 by Cauchy–Schwarz.
pub fn mu(law: &NoiseLaw, beta: f64) -> Result<f64> {
    Ok(log_mu(law, beta)?.max(0.0).exp())
}

/// Upper end of the L² regime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Beta0 {
    Finite(f64),
    Infinite,
}

impl Beta0 {
    pub fn finite(self) -> Option<f64> {
        match self {
            Beta0::Finite(b) => Some(b),
            Beta0::Infinite => None,
        }
    }
}

/// Supremum of `beta >= 0` with `mu(beta) < 1/rho_d`.
///
/// Doubles an upper bracket up to [`BETA0_CAP`] and then bisects, relying on
/// `mu` being non-decreasing.
pub fn beta0(law: &NoiseLaw, rho_d: f64) -> Result<Beta0> {
    if !(rho_d > 0.0 && rho_d < 1.0) {
        return Err(invalid(format!("rho_d must lie in (0, 1), got {rho_d}")));
    }
    let target = -rho_d.ln();
    let above = |b: f64| -> Result<bool> { Ok(log_mu(law, b)? >= target) };

    let mut lo = 0.0;
    let mut hi = 1.0;
    while !above(hi)? {
        if hi >= BETA0_CAP {
            return Ok(Beta0::Infinite);
        }
        lo = hi;
        hi = (hi * 2.0).min(BETA0_CAP);
    }
    while hi - lo > BETA0_TOL {
        let mid = 0.5 * (lo + hi);
        if above(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Beta0::Finite(0.5 * (lo + hi)))
}

/// Standard normal quantile, Wichura's AS 241 (PPND16); relative accuracy
/// about 1e-16 over the open unit interval.
#[inline]
#[allow(clippy::excessive_precision, clippy::inconsistent_digit_grouping)]
pub fn standard_normal_quantile(p: f64) -> f64 {
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q
            * (((((((2509.080_928_730_122_7 * r + 33430.575_583_588_13) * r + 67265.770_927_008_7) * r
                + 45921.953_931_549_87)
                * r
                + 13731.693_765_509_461)
                * r
                + 1971.590_950_306_551_4)
                * r
                + 133.141_667_891_784_38)
                * r
                + 3.387_132_872_796_366_5)
            / (((((((5226.495_278_852_546 * r + 28729.085_735_721_943) * r + 39307.895_800_092_71) * r
                + 21213.794_301_586_597)
                * r
                + 5394.196_021_424_751)
                * r
                + 687.187_007_492_057_9)
                * r
                + 42.313_330_701_600_91)
                * r
                + 1.0);
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let r = (-tail.ln()).sqrt();
    let v = if r <= 5.0 {
        let r = r - 1.6;
        (((((((7.745_450_142_783_414e-4 * r + 0.022_723_844_989_269_184) * r + 0.241_780_725_177_450_6) * r
            + 1.270_458_252_452_368_4)
            * r
            + 3.647_848_324_763_204_5)
            * r
            + 5.769_497_221_460_691)
            * r
            + 4.630_337_846_156_546)
            * r
            + 1.423_437_110_749_683_5)
            / (((((((1.050_750_071_644_416_9e-9 * r + 5.475_938_084_995_345e-4) * r
                + 0.015_198_666_563_616_457)
                * r
                + 0.148_103_976_427_480_08)
                * r
                + 0.689_767_334_985_1)
                * r
                + 1.676_384_830_183_803_8)
                * r
                + 2.053_191_626_637_759)
                * r
                + 1.0)
    } else {
        let r = r - 5.0;
        (((((((2.010_334_399_292_288_1e-7 * r + 2.711_555_568_743_487_6e-5) * r
            + 0.001_242_660_947_388_078_4)
            * r
            + 0.026_532_189_526_576_124)
            * r
            + 0.296_560_571_828_504_9)
            * r
            + 1.784_826_539_917_291_3)
            * r
            + 5.463_784_911_164_114)
            * r
            + 6.657_904_643_501_103)
            / (((((((2.044_263_103_389_939_7e-15 * r + 1.421_511_758_316_446e-7) * r
                + 1.846_318_317_510_054_8e-5)
                * r
                + 7.868_691_311_456_133e-4)
                * r
                + 0.014_875_361_290_850_615)
                * r
                + 0.136_929_880_922_735_8)
                * r
                + 0.599_832_206_555_887_9)
                * r
                + 1.0)
    };
    if q < 0.0 {
        -v
    } else {
        v
    }
}

/// A space-time field of noise values `xi(t, x)`, `t >= 1`, `x` in `Z^d`.
pub trait NoiseField: Sync {
    fn dim(&self) -> usize;

    fn xi(&self, t: u64, x: &[i64]) -> f64;

    /// Fills `out[j] = xi(t, (prefix, z0 + j * step))`.
    fn fill_row(&self, t: u64, prefix: &[i64], z0: i64, step: i64, out: &mut [f64]) {
        let mut x = prefix.to_vec();
        x.push(z0);
        let last = x.len() - 1;
        for (j, o) in out.iter_mut().enumerate() {
            x[last] = z0 + j as i64 * step;
            *o = self.xi(t, &x);
        }
    }
}

impl<F: NoiseField + ?Sized> NoiseField for &F {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn xi(&self, t: u64, x: &[i64]) -> f64 {
        (**self).xi(t, x)
    }
    fn fill_row(&self, t: u64, prefix: &[i64], z0: i64, step: i64, out: &mut [f64]) {
        (**self).fill_row(t, prefix, z0, step, out)
    }
}

/// Reproducible i.i.d. environment keyed by `(seed, t, x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub seed: u64,
    pub law: NoiseLaw,
    pub dim: usize,
}

impl Environment {
    pub fn new(seed: u64, law: NoiseLaw, dim: usize) -> Result<Self> {
        law.validate()?;
        if dim == 0 {
            return Err(invalid("lattice dimension must be positive"));
        }
        Ok(Self { seed, law, dim })
    }

    /// The underlying standard Gaussian at a site, before the law's map.
    #[inline]
    pub fn gaussian(&self, t: u64, x: &[i64]) -> f64 {
        standard_normal_quantile(mix::unit_open(mix::hash_site(self.seed, t, x)))
    }
}

impl NoiseField for Environment {
    fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    fn xi(&self, t: u64, x: &[i64]) -> f64 {
        debug_assert!(t >= 1, "noise is indexed from t = 1");
        debug_assert_eq!(x.len(), self.dim);
        self.law.transform(self.gaussian(t, x))
    }

    fn fill_row(&self, t: u64, prefix: &[i64], z0: i64, step: i64, out: &mut [f64]) {
        let head = mix::site_prefix(self.seed, t, prefix);
        let mut z = z0;
        match &self.law {
            NoiseLaw::StandardGaussian => {
                for o in out.iter_mut() {
                    *o = standard_normal_quantile(mix::unit_open(mix::absorb(head, z as u64)));
                    z += step;
                }
            }
            law => {
                for o in out.iter_mut() {
                    *o = law.transform(standard_normal_quantile(mix::unit_open(mix::absorb(head, z as u64))));
                    z += step;
                }
            }
        }
    }
}

/// Debug environment with every noise value equal to zero.
#[derive(Debug, Clone, Copy)]
pub struct ZeroNoise {
    pub dim: usize,
}

impl NoiseField for ZeroNoise {
    fn dim(&self) -> usize {
        self.dim
    }
    fn xi(&self, _t: u64, _x: &[i64]) -> f64 {
        0.0
    }
    fn fill_row(&self, _t: u64, _prefix: &[i64], _z0: i64, _step: i64, out: &mut [f64]) {
        out.fill(0.0);
    }
}

/// Debug environment: `base` plus `amount` at the single site `(t, site)`.
#[derive(Debug, Clone)]
pub struct BumpNoise<F> {
    pub base: F,
    pub t: u64,
    pub site: Vec<i64>,
    pub amount: f64,
}

impl<F: NoiseField> NoiseField for BumpNoise<F> {
    fn dim(&self) -> usize {
        self.base.dim()
    }
    fn xi(&self, t: u64, x: &[i64]) -> f64 {
        let v = self.base.xi(t, x);
        if t == self.t && x == self.site.as_slice() {
            v + self.amount
        } else {
            v
        }
    }
}

/// Time-reversed, translated view of another field:
/// `xi'(t, x) = base.xi(terminal + 1 - t, x - origin)` for `1 <= t <= terminal`.
///
/// The view has the same law as `base`. Computations ending at time `terminal`
/// near `origin` then draw their last noise layers from the first layers of
/// `base`, which couples runs with different terminal times.
#[derive(Debug, Clone)]
pub struct AnchoredNoise<'a, F> {
    pub base: &'a F,
    pub terminal: u64,
    pub origin: Vec<i64>,
}

impl<'a, F: NoiseField> AnchoredNoise<'a, F> {
    pub fn new(base: &'a F, terminal: u64, origin: Vec<i64>) -> Self {
        assert_eq!(origin.len(), base.dim());
        Self { base, terminal, origin }
    }
}

impl<F: NoiseField> NoiseField for AnchoredNoise<'_, F> {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn xi(&self, t: u64, x: &[i64]) -> f64 {
        assert!(t >= 1 && t <= self.terminal, "time {t} outside anchored window 1..={}", self.terminal);
        let shifted: Vec<i64> = x.iter().zip(&self.origin).map(|(a, o)| a - o).collect();
        self.base.xi(self.terminal + 1 - t, &shifted)
    }

    fn fill_row(&self, t: u64, prefix: &[i64], z0: i64, step: i64, out: &mut [f64]) {
        assert!(t >= 1 && t <= self.terminal, "time {t} outside anchored window 1..={}", self.terminal);
        let d = self.origin.len();
        let shifted: Vec<i64> = prefix.iter().zip(&self.origin).map(|(a, o)| a - o).collect();
        self.base
            .fill_row(self.terminal + 1 - t, &shifted, z0 - self.origin[d - 1], step, out)
    }
}
