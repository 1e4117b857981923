//! Diamond-shaped lattice regions and the nearest-neighbour sweep kernel.
//!
//! A one-step recursion on `Z^d` with nearest-neighbour coupling has
//! propagation speed one in the L1 metric. The exact region therefore shrinks
//! as an L1 ball (a "diamond"), and storing exactly that shape avoids the
//! wasted corners of a cube.
//!
//! Sites are grouped in rows along the last axis. A row is addressed by its
//! prefix `(u_1, .., u_{d-1})` relative to the centre. Within a row the last
//! coordinate runs with step 1, or with step 2 for a parity layout that keeps
//! only sites with `sum(u) = parity (mod 2)`. In both cases every neighbour of a
//! row segment is a contiguous segment of some other row, which keeps the
//! sweep inner loop branch-free.

use crate::error::{invalid, Result};

const NO_ROW: u32 = u32::MAX;

#[derive(Debug, Clone, Copy)]
struct Row {
    /// Relative last coordinate of the first stored site.
    lo: i64,
    len: usize,
    offset: usize,
    /// L1 norm of the relative prefix.
    norm: i64,
}

#[derive(Debug, Clone)]
pub struct Diamond {
    dim: usize,
    center: Vec<i64>,
    radius: i64,
    parity: Option<u8>,
    rows: Vec<Row>,
    prefixes: Vec<i64>,
    table: Vec<u32>,
    /// For each row, the rows whose prefix differs by -1 / +1 on each prefix axis.
    nbr: Vec<u32>,
    len: usize,
}

impl Diamond {
    /// All sites `z` with `|z - center|_1 <= radius`.
    pub fn new(center: &[i64], radius: i64) -> Result<Self> {
        Self::build(center, radius, None)
    }

    /// Sites of the diamond with `sum(z - center) = parity (mod 2)`.
    pub fn with_parity(center: &[i64], radius: i64, parity: u8) -> Result<Self> {
        Self::build(center, radius, Some(parity & 1))
    }

    fn build(center: &[i64], radius: i64, parity: Option<u8>) -> Result<Self> {
        let dim = center.len();
        if dim == 0 {
            return Err(invalid("lattice dimension must be positive"));
        }
        if radius < 0 {
            return Err(invalid(format!("diamond radius must be non-negative, got {radius}")));
        }
        let side = (2 * radius + 1) as usize;
        let table_len = side
            .checked_pow((dim - 1) as u32)
            .filter(|&n| n < NO_ROW as usize)
            .ok_or_else(|| invalid(format!("diamond of radius {radius} in dimension {dim} is too large")))?;
        let mut table = vec![NO_ROW; table_len];
        let mut rows = Vec::new();
        let mut prefixes = Vec::new();
        let mut len = 0usize;
        let mut u = vec![-radius; dim - 1];
        loop {
            let norm: i64 = u.iter().map(|c| c.abs()).sum();
            if norm <= radius {
                let rem = radius - norm;
                let (lo, count) = match parity {
                    None => (-rem, (2 * rem + 1) as usize),
                    Some(p) => {
                        let sum: i64 = u.iter().sum();
                        let lo = if (sum - rem).rem_euclid(2) == p as i64 { -rem } else { -rem + 1 };
                        let count = if lo > rem { 0 } else { ((rem - lo) / 2 + 1) as usize };
                        (lo, count)
                    }
                };
                table[dense_index(&u, radius)] = rows.len() as u32;
                rows.push(Row { lo, len: count, offset: len, norm });
                prefixes.extend_from_slice(&u);
                len += count;
            }
            if !advance(&mut u, radius) {
                break;
            }
        }
        let mut layout = Self { dim, center: center.to_vec(), radius, parity, rows, prefixes, table, nbr: Vec::new(), len };
        let w = dim - 1;
        let mut nbr = Vec::with_capacity(layout.rows.len() * 2 * w);
        let mut probe = vec![0i64; w];
        for r in 0..layout.rows.len() {
            for axis in 0..w {
                for delta in [-1i64, 1] {
                    probe.copy_from_slice(layout.relative_prefix(r));
                    probe[axis] += delta;
                    nbr.push(layout.row_of_prefix(&probe).map_or(NO_ROW, |x| x as u32));
                }
            }
        }
        layout.nbr = nbr;
        Ok(layout)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn center(&self) -> &[i64] {
        &self.center
    }

    pub fn radius(&self) -> i64 {
        self.radius
    }

    pub fn parity(&self) -> Option<u8> {
        self.parity
    }

    /// Number of stored sites.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    fn step(&self) -> i64 {
        1 << self.shift()
    }

    /// `log2` of the row step, so index arithmetic avoids integer division.
    #[inline]
    fn shift(&self) -> u32 {
        self.parity.is_some() as u32
    }

    fn row_of_prefix(&self, u: &[i64]) -> Option<usize> {
        if u.iter().any(|c| c.abs() > self.radius) {
            return None;
        }
        match self.table[dense_index(u, self.radius)] {
            NO_ROW => None,
            r => Some(r as usize),
        }
    }

    fn relative_prefix(&self, row: usize) -> &[i64] {
        let w = self.dim - 1;
        &self.prefixes[row * w..(row + 1) * w]
    }

    /// Storage index of an absolute site, if the layout holds it.
    pub fn index_of(&self, x: &[i64]) -> Option<usize> {
        debug_assert_eq!(x.len(), self.dim);
        let d = self.dim;
        let mut u = [0i64; 16];
        let u = if d <= 16 { &mut u[..d] } else { return self.index_of_slow(x) };
        for i in 0..d {
            u[i] = x[i] - self.center[i];
        }
        self.index_of_relative(u)
    }

    fn index_of_slow(&self, x: &[i64]) -> Option<usize> {
        let u: Vec<i64> = x.iter().zip(&self.center).map(|(a, c)| a - c).collect();
        self.index_of_relative(&u)
    }

    fn index_of_relative(&self, u: &[i64]) -> Option<usize> {
        let d = self.dim;
        let row = &self.rows[self.row_of_prefix(&u[..d - 1])?];
        let z = u[d - 1];
        let k = z - row.lo;
        if k < 0 || k % self.step() != 0 {
            return None;
        }
        let k = (k / self.step()) as usize;
        (k < row.len).then_some(row.offset + k)
    }

    /// Calls `f(index, site)` for every stored site, in storage order.
    pub fn for_each_site<F: FnMut(usize, &[i64])>(&self, mut f: F) {
        let d = self.dim;
        let mut x = vec![0i64; d];
        for (r, row) in self.rows.iter().enumerate() {
            for (i, &p) in self.relative_prefix(r).iter().enumerate() {
                x[i] = self.center[i] + p;
            }
            for k in 0..row.len {
                x[d - 1] = self.center[d - 1] + row.lo + k as i64 * self.step();
                f(row.offset + k, &x);
            }
        }
    }

    /// Collects every stored site, in storage order.
    pub fn sites(&self) -> Vec<Vec<i64>> {
        let mut out = Vec::with_capacity(self.len);
        self.for_each_site(|_, x| out.push(x.to_vec()));
        out
    }
}

fn dense_index(u: &[i64], radius: i64) -> usize {
    let side = 2 * radius + 1;
    u.iter().rev().fold(0i64, |acc, &c| acc * side + (c + radius)) as usize
}

/// Lexicographic odometer over `[-radius, radius]^n`, first coordinate slowest.
fn advance(u: &mut [i64], radius: i64) -> bool {
    for c in u.iter_mut().rev() {
        if *c < radius {
            *c += 1;
            return true;
        }
        *c = -radius;
    }
    false
}

/// One destination row segment handed to a sweep kernel.
pub struct RowJob<'a> {
    /// Absolute prefix coordinates `(x_1, .., x_{d-1})`.
    pub prefix: &'a [i64],
    /// Absolute last coordinate of the first destination site.
    pub z0: i64,
    /// Spacing of the last coordinate along the row.
    pub step: i64,
}

/// Applies a nearest-neighbour update from `prev` to `next`.
///
/// Every destination site within L1 distance `active` of the common centre is
/// visited. For each row segment, `kernel` receives the destination slice and
/// `2d` source slices aligned with it, one per lattice direction.
///
/// Layouts must share the centre and either both be full, or be parity layouts
/// of opposite parity. The caller guarantees `active + 1 <= prev.radius()`,
/// `active <= next.radius()`, and that `src` is meaningful within distance
/// `active + 1`.
pub fn sweep<K>(prev: &Diamond, src: &[f64], next: &Diamond, dst: &mut [f64], active: i64, mut kernel: K)
where
    K: FnMut(&RowJob<'_>, &mut [f64], &[&[f64]]),
{
    assert_eq!(prev.dim, next.dim);
    assert_eq!(prev.center, next.center);
    assert_eq!(src.len(), prev.len);
    assert_eq!(dst.len(), next.len);
    match (prev.parity, next.parity) {
        (None, None) => {}
        (Some(a), Some(b)) if a != b => {}
        _ => panic!("incompatible layouts for a sweep"),
    }
    assert!(active >= 0 && active < prev.radius && active <= next.radius, "sweep radius out of range");

    let d = next.dim;
    let step = next.step();
    let mut prefix_abs = vec![0i64; d - 1];
    let mut sources: Vec<&[f64]> = Vec::with_capacity(2 * d);
    // Layouts of equal radius enumerate the same prefixes in the same order.
    let same_rows = prev.radius == next.radius;
    let w = d - 1;

    for (r, row) in next.rows.iter().enumerate() {
        if row.norm > active || row.len == 0 {
            continue;
        }
        let reach = active - row.norm;
        // Destination index range [k0, k1) with |lo + k*step| <= reach.
        let sh = next.shift();
        let k0 = (-((reach + row.lo) >> sh)).max(0);
        let k1 = (((reach - row.lo) >> sh) + 1).min(row.len as i64);
        if k1 <= k0 {
            continue;
        }
        let (k0, n) = (k0 as usize, (k1 - k0) as usize);
        let z_first = row.lo + k0 as i64 * step;
        let u = next.relative_prefix(r);

        sources.clear();
        let same = if same_rows { r } else { prev.row_of_prefix(u).expect("row present in source layout") };
        // Neighbours across the prefix axes: same last coordinate.
        for &pr in &prev.nbr[same * 2 * w..(same + 1) * 2 * w] {
            assert!(pr != NO_ROW, "prefix neighbour row present");
            sources.push(segment(prev, src, pr as usize, z_first, n));
        }
        // Neighbours along the last axis.
        for delta in [-1i64, 1] {
            sources.push(segment(prev, src, same, z_first + delta, n));
        }

        for (i, &p) in u.iter().enumerate() {
            prefix_abs[i] = next.center[i] + p;
        }
        let job = RowJob { prefix: &prefix_abs, z0: next.center[d - 1] + z_first, step };
        let start = row.offset + k0;
        kernel(&job, &mut dst[start..start + n], &sources);
    }
}

/// Element-wise sum of aligned source slices into `acc`.
#[inline]
pub fn sum_sources(acc: &mut Vec<f64>, sources: &[&[f64]]) {
    let n = sources[0].len();
    acc.clear();
    acc.extend_from_slice(sources[0]);
    for s in &sources[1..] {
        for (a, b) in acc.iter_mut().zip(&s[..n]) {
            *a += b;
        }
    }
}

fn segment<'a>(layout: &Diamond, values: &'a [f64], row: usize, z: i64, n: usize) -> &'a [f64] {
    let r = &layout.rows[row];
    let k = z - r.lo;
    debug_assert!(k >= 0 && k % layout.step() == 0, "source segment misaligned");
    let k = (k >> layout.shift()) as usize;
    assert!(k + n <= r.len, "source segment leaves its row");
    &values[r.offset + k..r.offset + k + n]
}

/// Tolerance used for closed Euclidean balls with real radius.
const BALL_SLACK: f64 = 1e-12;

/// Lattice points `y` with `|y - center|_2 <= r`, in lexicographic order.
pub fn euclidean_ball(center: &[i64], r: f64) -> Vec<Vec<i64>> {
    let d = center.len();
    if !(r >= 0.0) {
        return Vec::new();
    }
    let reach = r.floor() as i64;
    let bound = r * r * (1.0 + BALL_SLACK);
    let mut out = Vec::new();
    let mut u = vec![-reach; d];
    loop {
        let n2: i64 = u.iter().map(|c| c * c).sum();
        if n2 as f64 <= bound {
            out.push(u.iter().zip(center).map(|(a, c)| a + c).collect());
        }
        if !advance(&mut u, reach) {
            break;
        }
    }
    out
}

/// Largest L1 distance from `center` to a point of the ball `B(center, r)`.
pub fn ball_l1_reach(d: usize, r: f64) -> i64 {
    euclidean_ball(&vec![0; d], r)
        .iter()
        .map(|y| y.iter().map(|c| c.abs()).sum::<i64>())
        .max()
        .unwrap_or(0)
}

/// Number of lattice points in the L1 ball of radius `r` in `Z^d`, or of
/// those with `|u|_1 = parity (mod 2)` when a parity is given.
pub fn diamond_count(d: usize, r: i64, parity: Option<u8>) -> u128 {
    // |B(r)| = sum_k 2^k C(d, k) C(r, k)
    let ball = |r: i64| -> u128 {
        if r < 0 {
            return 0;
        }
        let mut total: u128 = 0;
        let (mut cd, mut cr): (u128, u128) = (1, 1);
        for k in 0..=d.min(r as usize) {
            if k > 0 {
                cd = cd * (d - k + 1) as u128 / k as u128;
                cr = cr * (r as u128 - k as u128 + 1) / k as u128;
            }
            total += (1u128 << k) * cd * cr;
        }
        total
    };
    match parity {
        None => ball(r),
        Some(p) => (0..=r).filter(|k| k % 2 == p as i64).map(|k| ball(k) - ball(k - 1)).sum(),
    }
}

pub fn l1_norm(x: &[i64]) -> i64 {
    x.iter().map(|c| c.abs()).sum()
}
