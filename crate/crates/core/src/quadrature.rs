//! Numerical integration: adaptive Gauss–Kronrod on finite intervals, tensor
//! Gauss–Hermite rules for Gaussian expectations and tensor Gauss–Legendre
//! rules on boxes.

use std::collections::BinaryHeap;

use gauss_quad::hermite::GaussHermite;
use gauss_quad::legendre::GaussLegendre;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_225,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_94,
    0.417_959_183_673_469_4,
];

const MAX_INTERVALS: usize = 4000;

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.err.total_cmp(&other.err)
    }
}

/// Adaptive 15-point Gauss–Kronrod integration of `f` over `[a, b]`.
///
/// Bisects the interval with the largest error estimate until the summed
/// estimate drops below `max(abs_tol, rel_tol * |I|)`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64, abs_tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let (value, err) = gk15(&f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Piece { a, b, value, err });
    let mut total = value;
    let mut total_err = err;
    loop {
        if !total.is_finite() {
            return Err(Error::EstimationFailure(format!(
                "integrand is not finite on [{a}, {b}]"
            )));
        }
        if total_err <= abs_tol.max(rel_tol * total.abs()) {
            return Ok(total);
        }
        if heap.len() >= MAX_INTERVALS {
            return Err(Error::EstimationFailure(format!(
                "adaptive quadrature on [{a}, {b}] did not converge: estimate {total:e}, error {total_err:e}"
            )));
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        let (lv, le) = gk15(&f, worst.a, mid);
        let (rv, re) = gk15(&f, mid, worst.b);
        total += lv + rv - worst.value;
        total_err += le + re - worst.err;
        heap.push(Piece { a: worst.a, b: mid, value: lv, err: le });
        heap.push(Piece { a: mid, b: worst.b, value: rv, err: re });
        // Re-sum occasionally so cancellation in the running totals cannot drift.
        if heap.len() % 64 == 0 {
            total = heap.iter().map(|p| p.value).sum();
            total_err = heap.iter().map(|p| p.err).sum();
        }
    }
}

/// Nodes and weights for `E[f(Z)]`, `Z` one-dimensional standard Gaussian.
#[derive(Debug, Clone)]
pub struct GaussianRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussianRule {
    pub fn new(order: usize) -> Result<Self> {
        let order = std::num::NonZeroUsize::new(order)
            .ok_or_else(|| Error::InvalidInput("quadrature order must be positive".into()))?;
        let rule = GaussHermite::new(order);
        let norm = std::f64::consts::PI.sqrt();
        let (nodes, weights) = rule
            .iter()
            .map(|(x, w)| (x * std::f64::consts::SQRT_2, w / norm))
            .unzip();
        Ok(Self { nodes, weights })
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// Tensor-product expectation `E[f(Z)]` for a `dim`-dimensional standard
    /// Gaussian `Z`. Cost is `order^dim` evaluations.
    pub fn expect_tensor<F: FnMut(&[f64]) -> f64>(&self, dim: usize, mut f: F) -> f64 {
        let mut point = vec![0.0; dim];
        let mut sum = 0.0;
        for_each_index(dim, self.order(), |idx| {
            let mut w = 1.0;
            for (k, &i) in idx.iter().enumerate() {
                point[k] = self.nodes[i];
                w *= self.weights[i];
            }
            sum += w * f(&point);
        });
        sum
    }
}

/// Walks every multi-index of `dim` coordinates with `n` choices each.
fn for_each_index<F: FnMut(&[usize])>(dim: usize, n: usize, mut f: F) {
    let mut idx = vec![0usize; dim];
    'outer: loop {
        f(&idx);
        for k in (0..dim).rev() {
            idx[k] += 1;
            if idx[k] < n {
                continue 'outer;
            }
            idx[k] = 0;
        }
        break;
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct BoxRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl BoxRule {
    pub fn new(order: usize) -> Result<Self> {
        let order = std::num::NonZeroUsize::new(order)
            .ok_or_else(|| Error::InvalidInput("quadrature order must be positive".into()))?;
        let (nodes, weights) = GaussLegendre::new(order).iter().map(|(x, w)| (*x, *w)).unzip();
        Ok(Self { nodes, weights })
    }

    /// Tensor-product integral of `f` over the box `[lo, hi]`.
    pub fn integrate_box<F: FnMut(&[f64]) -> f64>(&self, lo: &[f64], hi: &[f64], mut f: F) -> f64 {
        let dim = lo.len();
        let half: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| 0.5 * (b - a)).collect();
        let mid: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| 0.5 * (b + a)).collect();
        let jac: f64 = half.iter().product();
        let mut point = vec![0.0; dim];
        let mut sum = 0.0;
        for_each_index(dim, self.nodes.len(), |idx| {
            let mut w = jac;
            for (k, &i) in idx.iter().enumerate() {
                point[k] = mid[k] + half[k] * self.nodes[i];
                w *= self.weights[i];
            }
            sum += w * f(&point);
        });
        sum
    }
}
