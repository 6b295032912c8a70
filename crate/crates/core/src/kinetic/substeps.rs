//! Exact-in-time substeps of the split kinetic update.
//!
//! All substeps act on a [`Distribution`] in place. Transport shifts every
//! velocity plane in `x`; acceleration, rotation and collision act on the
//! velocity block of each spatial node.

use std::collections::HashMap;
use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::{shift_block, transpose_square, LineShifter};
use crate::fields::{Distribution, Field};
use crate::grid::{Axis, VelocityGrid};
use crate::spline::spline_shift_line;

/// Reconstruction used by the shift-type substeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    /// Trigonometric interpolation (FFT phase shifts).
    #[default]
    Spectral,
    /// Periodic cubic B-splines.
    CubicSpline,
}

/// Content closer to the box edge than the shift is allowed up to this
/// fraction of the global maximum in position space.
pub const SPATIAL_WRAP_TOL: f64 = 1e-8;

/// Same for velocity space, where the truncated Maxwellian tail already sits
/// near `1e-8` of the peak.
pub const VELOCITY_WRAP_TOL: f64 = 1e-6;

struct Shifter {
    kind: Interpolation,
    fft: LineShifter,
    coeffs: Vec<f64>,
}

impl Shifter {
    fn new(kind: Interpolation, n: usize) -> Self {
        Self {
            kind,
            fft: LineShifter::new(n),
            coeffs: Vec::with_capacity(n),
        }
    }

    #[inline]
    fn line(&mut self, line: &mut [f64], s: f64) {
        match self.kind {
            Interpolation::Spectral => self.fft.shift(line, s),
            Interpolation::CubicSpline => spline_shift_line(line, s, &mut self.coeffs),
        }
    }

    /// `block[i][j]` becomes the reconstruction at `(i - s0, j - s1)`.
    fn block(&mut self, block: &mut [f64], tmp: &mut [f64], n: usize, s0: f64, s1: f64) {
        match self.kind {
            Interpolation::Spectral => shift_block(&mut self.fft, block, tmp, n, s0, s1),
            Interpolation::CubicSpline => {
                if s1 != 0.0 {
                    for row in block.chunks_exact_mut(n) {
                        self.line(row, s1);
                    }
                }
                if s0 != 0.0 {
                    transpose_square(block, tmp, n);
                    for row in tmp.chunks_exact_mut(n) {
                        self.line(row, s0);
                    }
                    transpose_square(tmp, block, n);
                }
            }
        }
    }
}

/// Largest `|value|` in the band of cells that a shift of `(s0, s1)` cells
/// carries across the edge of an `n x n` block.
fn wrapped_max(block: &[f64], n: usize, s0: f64, s1: f64) -> f64 {
    let band = |s: f64| -> (usize, usize) {
        // Rows [lo, hi) leave the box.
        let w = (s.abs().ceil() as usize + 1).min(n);
        if s > 0.0 {
            (n - w, n)
        } else if s < 0.0 {
            (0, w)
        } else {
            (0, 0)
        }
    };
    let (a0, a1) = band(s0);
    let (b0, b1) = band(s1);
    let mut m: f64 = 0.0;
    for i in a0..a1 {
        for v in &block[i * n..(i + 1) * n] {
            m = m.max(v.abs());
        }
    }
    for i in 0..n {
        for v in &block[i * n + b0..i * n + b1] {
            m = m.max(v.abs());
        }
    }
    m
}

/// Blocked transpose of a `rows x cols` row-major matrix.
fn transpose_rect(src: &[f64], dst: &mut [f64], rows: usize, cols: usize) {
    const TILE: usize = 32;
    for i0 in (0..rows).step_by(TILE) {
        for j0 in (0..cols).step_by(TILE) {
            for i in i0..(i0 + TILE).min(rows) {
                for j in j0..(j0 + TILE).min(cols) {
                    dst[j * rows + i] = src[i * cols + j];
                }
            }
        }
    }
}

/// Free streaming `f'(x, v) = f(x - v dt_eff, v)`.
pub fn transport_step(f: &mut Distribution, dt_eff: f64, interp: Interpolation) -> Result<()> {
    if dt_eff == 0.0 {
        return Ok(());
    }
    let nx = f.spatial.n();
    let nx2 = f.spatial.len();
    let nv2 = f.velocity.len();
    let dx = f.spatial.dx();
    let vgrid = f.velocity;
    let global = f.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));

    let mut planes = vec![0.0; nx2 * nv2];
    transpose_rect(&f.values, &mut planes, nx2, nv2);
    let breach = planes
        .par_chunks_mut(nx2)
        .enumerate()
        .map_init(
            || (Shifter::new(interp, nx), vec![0.0; nx2]),
            |(sh, tmp), (j, plane)| {
                let [v1, v2] = vgrid.velocity(j);
                let (s0, s1) = (v1 * dt_eff / dx, v2 * dt_eff / dx);
                let wrapped = wrapped_max(plane, nx, s0, s1);
                sh.block(plane, tmp, nx, s0, s1);
                if wrapped > SPATIAL_WRAP_TOL * global {
                    Some((j, wrapped))
                } else {
                    None
                }
            },
        )
        .filter_map(|b| b)
        .min_by_key(|(j, _)| *j);
    transpose_rect(&planes, &mut f.values, nv2, nx2);
    if let Some((j, wrapped)) = breach {
        let [v1, v2] = vgrid.velocity(j);
        return Err(Error::SupportBreach(format!(
            "transport at velocity ({v1:.3}, {v2:.3}) carries {wrapped:.3e} across the spatial box edge (max f {global:.3e})"
        )));
    }
    Ok(())
}

/// Velocity shift `f'(x, v) = f(x, v - coef E(x))` with `coef = (q/m) dt / eps`.
pub fn accel_step(f: &mut Distribution, e: &Field, coef: f64, interp: Interpolation) -> Result<()> {
    if coef == 0.0 {
        return Ok(());
    }
    let nv = f.velocity.n();
    let nv2 = f.velocity.len();
    let dv = f.velocity.dv();
    let global = f.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let breach = f
        .values
        .par_chunks_mut(nv2)
        .enumerate()
        .map_init(
            || (Shifter::new(interp, nv), vec![0.0; nv2]),
            |(sh, tmp), (k, block)| {
                let (s0, s1) = (coef * e.x1[k] / dv, coef * e.x2[k] / dv);
                if s0 == 0.0 && s1 == 0.0 {
                    return None;
                }
                let wrapped = wrapped_max(block, nv, s0, s1);
                sh.block(block, tmp, nv, s0, s1);
                (wrapped > VELOCITY_WRAP_TOL * global).then_some((k, wrapped))
            },
        )
        .filter_map(|b| b)
        .min_by_key(|(k, _)| *k);
    if let Some((k, wrapped)) = breach {
        return Err(Error::SupportBreach(format!(
            "acceleration at spatial node {k} carries {wrapped:.3e} across the velocity box edge (max f {global:.3e})"
        )));
    }
    Ok(())
}

/// Reduces an angle to `(-pi, pi]`.
fn reduce_angle(theta: f64) -> f64 {
    let mut t = theta.rem_euclid(2.0 * PI);
    if t > PI {
        t -= 2.0 * PI;
    }
    t
}

/// Applies `f'(v) = f(R(theta) v)` to one velocity block, where `R(theta)`
/// is the counter-clockwise rotation. Uses three shears after folding the
/// angle into `[-pi/2, pi/2]` with the exact point reflection `v -> -v`.
fn rotate_block(sh: &mut Shifter, block: &mut [f64], tmp: &mut [f64], axis: &Axis, theta: f64) {
    let n = axis.len();
    let mut t = reduce_angle(theta);
    if t.abs() > 0.5 * PI {
        block.reverse();
        t -= PI.copysign(t);
    }
    if t == 0.0 {
        return;
    }
    let a = -(0.5 * t).tan();
    let b = t.sin();
    let dv = axis.spacing();
    // Shear in v1 (lines along the first index, one per v2 column).
    let shear_first = |sh: &mut Shifter, block: &mut [f64], tmp: &mut [f64], c: f64| {
        transpose_square(block, tmp, n);
        for (j2, line) in tmp.chunks_exact_mut(n).enumerate() {
            sh.line(line, -c * axis.node(j2) / dv);
        }
        transpose_square(tmp, block, n);
    };
    shear_first(sh, block, tmp, a);
    for (j1, line) in block.chunks_exact_mut(n).enumerate() {
        sh.line(line, -b * axis.node(j1) / dv);
    }
    shear_first(sh, block, tmp, a);
}

/// Exact gyration over `angle[k] = omega_c(x_k) dt / eps^2` at every node:
/// `f'(x, v) = f(x, R(angle) v)` (clockwise motion of the content).
pub fn rotation_step(f: &mut Distribution, angles: &[f64], interp: Interpolation) {
    let nv = f.velocity.n();
    let nv2 = f.velocity.len();
    let axis = *f.velocity.axis();
    f.values
        .par_chunks_mut(nv2)
        .zip(angles.par_iter())
        .for_each_init(
            || (Shifter::new(interp, nv), vec![0.0; nv2]),
            |(sh, tmp), (block, &theta)| rotate_block(sh, block, tmp, &axis, theta),
        );
}

/// Per-axis propagator of the Ornstein-Uhlenbeck semigroup over time `mu`:
/// dilation by `exp(mu)` followed by a Gaussian convolution of variance
/// `sigma (1 - exp(-2 mu))`, both in the trigonometric basis.
#[derive(Debug, Clone)]
pub struct CollisionPropagator {
    n: usize,
    mu: f64,
    matrix: Vec<f64>,
}

/// Periodic Dirichlet kernel of the even-length trigonometric interpolant.
fn dirichlet(x: f64, n: usize) -> f64 {
    let half = n / 2;
    let mut s = 1.0 + (PI * x).cos();
    for k in 1..half {
        s += 2.0 * (2.0 * PI * k as f64 * x / n as f64).cos();
    }
    s / n as f64
}

impl CollisionPropagator {
    pub fn new(grid: &VelocityGrid, mu: f64, sigma: f64) -> Self {
        let n = grid.n();
        let axis = grid.axis();
        let growth = mu.exp();
        let mut dilate = vec![0.0; n * n];
        for i in 0..n {
            let u = axis.node(i) * growth;
            if !axis.contains(u) {
                continue;
            }
            let t = axis.fractional_index(u);
            for m in 0..n {
                dilate[i * n + m] = dirichlet(t - m as f64, n);
            }
        }
        let variance = sigma * (-(-2.0 * mu).exp_m1());
        let dk = 2.0 * PI / (n as f64 * grid.dv());
        let mult: Vec<f64> = (0..=n / 2)
            .map(|k| (-0.5 * variance * (dk * k as f64).powi(2)).exp())
            .collect();
        let conv_entry = |d: i64| -> f64 {
            let mut s = mult[0] + mult[n / 2] * (PI * d as f64).cos();
            for (k, m) in mult.iter().enumerate().take(n / 2).skip(1) {
                s += 2.0 * m * (2.0 * PI * k as f64 * d as f64 / n as f64).cos();
            }
            s / n as f64
        };
        let conv: Vec<f64> = (0..n as i64).map(conv_entry).collect();
        let mut matrix = vec![0.0; n * n];
        for i in 0..n {
            for m in 0..n {
                let d = (i as i64 - m as i64).rem_euclid(n as i64) as usize;
                let c = conv[d];
                for j in 0..n {
                    matrix[i * n + j] += c * dilate[m * n + j];
                }
            }
        }
        for v in matrix.iter_mut() {
            *v *= growth;
        }
        Self { n, mu, matrix }
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// `block <- P block P^T`, then rescaled to its previous sum.
    fn apply(&self, block: &mut [f64], tmp: &mut [f64]) {
        let n = self.n;
        let p = &self.matrix;
        let before: f64 = crate::sum::pairwise(block);
        tmp.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            let out = &mut tmp[i * n..(i + 1) * n];
            for m in 0..n {
                let c = p[i * n + m];
                if c == 0.0 {
                    continue;
                }
                let row = &block[m * n..(m + 1) * n];
                for (o, r) in out.iter_mut().zip(row) {
                    *o += c * r;
                }
            }
        }
        for i in 0..n {
            let row = &tmp[i * n..(i + 1) * n];
            for j in 0..n {
                let pj = &p[j * n..(j + 1) * n];
                let mut s = 0.0;
                for (a, b) in row.iter().zip(pj) {
                    s += a * b;
                }
                block[i * n + j] = s;
            }
        }
        let after: f64 = crate::sum::pairwise(block);
        if after != 0.0 && before != 0.0 {
            let r = before / after;
            block.iter_mut().for_each(|v| *v *= r);
        }
    }
}

/// Exact Fokker-Planck relaxation over collision time `mu = dt / (eps tau)`.
pub fn collision_step(f: &mut Distribution, prop: &CollisionPropagator) {
    if prop.mu == 0.0 {
        return;
    }
    let nv2 = f.velocity.len();
    f.values
        .par_chunks_mut(nv2)
        .for_each_init(|| vec![0.0; nv2], |tmp, block| prop.apply(block, tmp));
}

/// Caches collision propagators by `mu`.
#[derive(Debug, Default)]
pub struct CollisionCache {
    props: HashMap<u64, CollisionPropagator>,
}

impl CollisionCache {
    pub fn get(&mut self, grid: &VelocityGrid, mu: f64, sigma: f64) -> &CollisionPropagator {
        self.props
            .entry(mu.to_bits())
            .or_insert_with(|| CollisionPropagator::new(grid, mu, sigma))
    }
}

/// Zeroes negative values down to `-tol`; returns the clipped mass or fails
/// on a deeper undershoot.
pub fn clip_negative(f: &mut Distribution, tol: f64) -> Result<f64> {
    let cell = f.phase_cell();
    if let Some(v) = f
        .values
        .iter()
        .cloned()
        .filter(|v| *v < -tol)
        .reduce(f64::min)
    {
        return Err(Error::Negativity { value: v, tol });
    }
    let nv2 = f.velocity.len();
    let clipped = crate::sum::blocked(&f.values, nv2, |_, b| {
        crate::sum::pairwise_map(b.len(), |i| if b[i] < 0.0 { -b[i] } else { 0.0 })
    });
    f.values.iter_mut().for_each(|v| {
        if *v < 0.0 {
            *v = 0.0
        }
    });
    Ok(clipped * cell)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::maxwellian_value;
    use crate::grid::SpatialGrid;

    fn small() -> (SpatialGrid, VelocityGrid) {
        (
            SpatialGrid::new(8.0, 16).unwrap(),
            VelocityGrid::new(8.0, 32).unwrap(),
        )
    }

    #[test]
    fn zero_steps_are_identity() {
        let (s, v) = small();
        let f0 = Distribution::from_fn(s, v, |a, b, c, d| {
            (-(a * a + b * b)).exp() * maxwellian_value(c - 0.3, d, 1.0)
        });
        let mut f = f0.clone();
        transport_step(&mut f, 0.0, Interpolation::Spectral).unwrap();
        accel_step(&mut f, &Field::zeros(s), 1.0, Interpolation::Spectral).unwrap();
        let cache = CollisionPropagator::new(&v, 0.0, 1.0);
        collision_step(&mut f, &cache);
        assert_eq!(f, f0);
    }

    #[test]
    fn rotation_by_quarter_turn_is_exact_permutation() {
        let axis = Axis::new(4.0, 8).unwrap();
        let n = 8;
        let block0: Vec<f64> = (0..n * n).map(|k| ((k * 7) % 13) as f64).collect();
        let mut block = block0.clone();
        let mut sh = Shifter::new(Interpolation::Spectral, n);
        let mut tmp = vec![0.0; n * n];
        rotate_block(&mut sh, &mut block, &mut tmp, &axis, PI);
        for i in 0..n {
            for j in 0..n {
                assert_eq!(block[i * n + j], block0[(n - 1 - i) * n + (n - 1 - j)]);
            }
        }
    }

    #[test]
    fn rotation_moves_mean_clockwise() {
        let (s, v) = (
            SpatialGrid::new(8.0, 8).unwrap(),
            VelocityGrid::new(8.0, 48).unwrap(),
        );
        let mut f = Distribution::from_fn(s, v, |_, _, c, d| maxwellian_value(c - 1.0, d, 1.0));
        let theta = 0.5;
        rotation_step(&mut f, &vec![theta; s.len()], Interpolation::Spectral);
        let block = f.block(0);
        let (mut m1, mut m2, mut m0) = (0.0, 0.0, 0.0);
        for (j, val) in block.iter().enumerate() {
            let [a, b] = v.velocity(j);
            m0 += val;
            m1 += a * val;
            m2 += b * val;
        }
        assert!((m1 / m0 - theta.cos()).abs() < 1e-10);
        assert!((m2 / m0 + theta.sin()).abs() < 1e-10);
    }

    #[test]
    fn collision_decays_mean_and_keeps_mass() {
        let (s, v) = (
            SpatialGrid::new(8.0, 8).unwrap(),
            VelocityGrid::new(8.0, 48).unwrap(),
        );
        let mut f = Distribution::from_fn(s, v, |_, _, c, d| maxwellian_value(c - 1.0, d, 1.0));
        let mass = f.mass();
        let mu = 0.1;
        collision_step(&mut f, &CollisionPropagator::new(&v, mu, 1.0));
        let block = f.block(3);
        let m0: f64 = block.iter().sum();
        let m1: f64 = block
            .iter()
            .enumerate()
            .map(|(j, x)| v.velocity(j)[0] * x)
            .sum();
        assert!((m1 / m0 - (-mu).exp()).abs() < 1e-6);
        assert!((f.mass() - mass).abs() < 1e-12 * mass);
    }

    #[test]
    fn clip_rejects_deep_negatives() {
        let (s, v) = small();
        let mut f = Distribution::zeros(s, v);
        f.values[3] = -1e-20;
        assert!(clip_negative(&mut f, 1e-18).unwrap() > 0.0);
        assert_eq!(f.values[3], 0.0);
        f.values[5] = -1.0;
        assert!(clip_negative(&mut f, 1e-18).is_err());
    }
}
