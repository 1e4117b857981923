//! Diffusive rescaling of the polymer surface: lattice indices for a
//! macroscopic point, ball smoothing, test functions and weak integrals.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lattice;
use crate::noise::NoiseLaw;
use crate::polymer::{self, HeightSlab};
use crate::quadrature::BoxRule;

/// Relative slack added before flooring, so that quotients like `1 / 0.01`
/// that land a few ulps below an integer still floor to that integer.
const FLOOR_SLACK: f64 = 1e-9;

/// `floor(v)` up to a relative snapping slack.
pub fn lattice_floor(v: f64) -> i64 {
    (v + FLOOR_SLACK * v.abs().max(1.0)).floor() as i64
}

/// `t_eps = floor(t / eps^2)`.
pub fn time_index(t: f64, eps: f64) -> u64 {
    lattice_floor(t / (eps * eps)).max(0) as u64
}

/// `x_eps = floor(x / eps)` coordinatewise.
pub fn space_index(x: &[f64], eps: f64) -> Vec<i64> {
    x.iter().map(|&c| lattice_floor(c / eps)).collect()
}

/// Smoothing radius `max(1, c eps^{-gamma})`.
pub fn r_schedule(eps: f64, gamma: f64, c: f64) -> f64 {
    (c * eps.powf(-gamma)).max(1.0)
}

/// A macroscopic point `(t, x)` seen at lattice scale `eps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub t: f64,
    pub x: Vec<f64>,
    pub eps: f64,
    pub r: f64,
    pub t_eps: u64,
    pub x_eps: Vec<i64>,
}

impl ScalingPoint {
    pub fn new(t: f64, x: &[f64], eps: f64, r: f64) -> Result<Self> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(invalid(format!("eps must lie in (0, 1), got {eps}")));
        }
        if !(t > 0.0 && t.is_finite()) || x.iter().any(|c| !c.is_finite()) {
            return Err(invalid("macroscopic point must have t > 0 and finite x"));
        }
        if !(r > 0.0 && r < 1.0 / eps) {
            return Err(invalid(format!("smoothing radius {r} must lie in (0, 1/eps)")));
        }
        let t_eps = time_index(t, eps);
        if t_eps == 0 {
            return Err(invalid(format!("t = {t} is below one lattice step at eps = {eps}")));
        }
        Ok(Self { t, x: x.to_vec(), eps, r, t_eps, x_eps: space_index(x, eps) })
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    /// Lattice sites of the smoothing ball `B(x_eps, r)`.
    pub fn ball(&self) -> Vec<Vec<i64>> {
        lattice::euclidean_ball(&self.x_eps, self.r)
    }

    /// L1 reach of the smoothing ball around `x_eps`.
    pub fn ball_reach(&self) -> i64 {
        lattice::ball_l1_reach(self.dim(), self.r)
    }
}

fn check_slab_time(slab: &HeightSlab, sp: &ScalingPoint) -> Result<()> {
    if slab.t() != sp.t_eps {
        return Err(invalid(format!("slab is at t = {}, point needs t_eps = {}", slab.t(), sp.t_eps)));
    }
    if slab.layout().dim() != sp.dim() {
        return Err(invalid("slab and point dimensions differ"));
    }
    Ok(())
}

/// Average of `F_eps(t_eps, y)` over the smoothing ball.
pub fn ball_average(slab: &HeightSlab, sp: &ScalingPoint, law: &NoiseLaw) -> Result<f64> {
    check_slab_time(slab, sp)?;
    let ball = sp.ball();
    let mut sum = 0.0;
    for y in &ball {
        sum += slab.beta_f(y).ok_or_else(|| {
            Error::Coverage(format!("site {y:?} of the smoothing ball is outside the slab"))
        })?;
    }
    let norm = polymer::normalizer(sp.dim(), law, slab.beta(), sp.t_eps)?;
    Ok(sum / ball.len() as f64 - norm)
}

/// Smoothed rescaled surface `f~(t, x)` with free-energy estimate `eta_hat`.
pub fn smoothed_surface(slab: &HeightSlab, sp: &ScalingPoint, law: &NoiseLaw, eta_hat: f64) -> Result<f64> {
    Ok((ball_average(slab, sp, law)? - eta_hat) / slab.beta())
}

/// Unsmoothed rescaled surface `f^(eps)(t, x)`.
pub fn unsmoothed_surface(slab: &HeightSlab, sp: &ScalingPoint, law: &NoiseLaw, eta_hat: f64) -> Result<f64> {
    check_slab_time(slab, sp)?;
    rescaled_at(slab, law, eta_hat, &sp.x_eps)
        .ok_or_else(|| Error::Coverage(format!("site {:?} is outside the slab", sp.x_eps)))?
}

/// `f^(eps)` at lattice site `y` from a slab at time `t_eps`, if stored.
pub fn rescaled_at(slab: &HeightSlab, law: &NoiseLaw, eta_hat: f64, y: &[i64]) -> Option<Result<f64>> {
    let bf = slab.beta_f(y)?;
    Some(
        polymer::normalizer(y.len(), law, slab.beta(), slab.t())
            .map(|norm| (bf - norm - eta_hat) / slab.beta()),
    )
}

/// Compactly supported test function on `R^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TestFunction {
    /// `exp(1 - 1 / (1 - |u|^2))`, `u = (x - center) / radius`.
    SmoothBump { center: Vec<f64>, radius: f64 },
    /// `prod_i cos^2(pi u_i / 2)` on the cube `|u_i| <= 1`.
    TensorCosine { center: Vec<f64>, radius: f64 },
    /// The smooth bump times `u_1`; it changes sign.
    SignedBump { center: Vec<f64>, radius: f64 },
}

impl TestFunction {
    pub fn center(&self) -> &[f64] {
        match self {
            Self::SmoothBump { center, .. } | Self::TensorCosine { center, .. } | Self::SignedBump { center, .. } => {
                center
            }
        }
    }

    pub fn radius(&self) -> f64 {
        match self {
            Self::SmoothBump { radius, .. } | Self::TensorCosine { radius, .. } | Self::SignedBump { radius, .. } => {
                *radius
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.center().len()
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.dim() != dim {
            return Err(invalid(format!("test function has dimension {}, expected {dim}", self.dim())));
        }
        if !(self.radius() > 0.0 && self.radius().is_finite()) || self.center().iter().any(|c| !c.is_finite()) {
            return Err(invalid("test function needs a finite centre and positive radius"));
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let (c, r) = (self.center(), self.radius());
        let u = x.iter().zip(c).map(|(a, b)| (a - b) / r);
        match self {
            Self::SmoothBump { .. } => bump(u.map(|v| v * v).sum()),
            Self::SignedBump { .. } => {
                let u1 = (x[0] - c[0]) / r;
                u1 * bump(u.map(|v| v * v).sum())
            }
            Self::TensorCosine { .. } => u
                .map(|v| if v.abs() < 1.0 { (std::f64::consts::FRAC_PI_2 * v).cos().powi(2) } else { 0.0 })
                .product(),
        }
    }

    /// Axis-aligned box containing the support.
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        let r = self.radius();
        (self.center().iter().map(|c| c - r).collect(), self.center().iter().map(|c| c + r).collect())
    }

    /// `int h phi` by tensor Gauss–Legendre over the bounding box.
    pub fn integrate_against<H: FnMut(&[f64]) -> f64>(&self, order: usize, mut h: H) -> Result<f64> {
        let (lo, hi) = self.bounding_box();
        Ok(BoxRule::new(order)?.integrate_box(&lo, &hi, |u| {
            let p = self.eval(u);
            if p == 0.0 {
                0.0
            } else {
                p * h(u)
            }
        }))
    }
}

fn bump(s: f64) -> f64 {
    if s < 1.0 {
        (1.0 - 1.0 / (1.0 - s)).exp()
    } else {
        0.0
    }
}

/// Lattice-indexed values of `f^(eps)` on some window.
pub trait LatticeField {
    fn value(&self, y: &[i64]) -> Option<f64>;
}

impl<F: Fn(&[i64]) -> Option<f64>> LatticeField for F {
    fn value(&self, y: &[i64]) -> Option<f64> {
        self(y)
    }
}

/// Inclusive lattice box of the cells `[eps y, eps (y + 1))` that meet the
/// support of `phi`.
pub fn weak_window(phi: &TestFunction, eps: f64) -> (Vec<i64>, Vec<i64>) {
    let (lo, hi) = phi.bounding_box();
    (lo.iter().map(|&v| lattice_floor(v / eps)).collect(), hi.iter().map(|&v| lattice_floor(v / eps)).collect())
}

/// Largest L1 distance from `center` to a site of the weak window.
pub fn weak_window_reach(phi: &TestFunction, eps: f64, center: &[i64]) -> i64 {
    let (lo, hi) = weak_window(phi, eps);
    lo.iter().zip(&hi).zip(center).map(|((a, b), c)| (c - a).abs().max((b - c).abs())).sum()
}

/// `eps^d sum_y f(y) phi(eps y)` over the weak window.
///
/// Every site of the window must be available in `field`.
pub fn weak_integral<L: LatticeField + ?Sized>(field: &L, phi: &TestFunction, eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(invalid(format!("eps must lie in (0, 1), got {eps}")));
    }
    let d = phi.dim();
    let (lo, hi) = weak_window(phi, eps);
    let mut y = lo.clone();
    let mut u = vec![0.0; d];
    let mut sum = 0.0;
    loop {
        let f = field.value(&y).ok_or_else(|| Error::Coverage(format!("weak window site {y:?} has no value")))?;
        for (a, &b) in u.iter_mut().zip(&y) {
            *a = eps * b as f64;
        }
        sum += f * phi.eval(&u);
        let mut k = d;
        loop {
            if k == 0 {
                return Ok(sum * eps.powi(d as i32));
            }
            k -= 1;
            if y[k] < hi[k] {
                y[k] += 1;
                break;
            }
            y[k] = lo[k];
        }
    }
}
