//! Free-space Poisson solver for the logarithmic kernel.
//!
//! The charge on the `N x N` box is zero-padded to `2N x 2N` and convolved
//! with the kernel sampled at all lattice offsets (Hockney's method), which
//! gives the exact discrete free-space convolution for charge supported on
//! the box.
//!
//! `Phi = (q / eps0) G * rho` with `G(x) = -ln|x| / (2 pi)`. The singular
//! self value is `G(0) = -(ln h - C) / (2 pi)` with the lattice constant
//! `C = ln(2 pi)/2 + ln(Gamma(1/4)^2 / (2 pi sqrt 2))`, which makes the
//! midpoint lattice sum of a smooth charge accurate to `O(h^2)`.
//!
//! The field is the direct convolution with `x / (2 pi |x|^2)` (zero self
//! value) plus the leading self-cell correction `-(h^2 / 2) grad rho / (2 pi)`.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::fft::fft2;
use crate::fields::{Density, Field, Potential};
use crate::grid::{PhysicsParams, SpatialGrid};
use crate::sum;

/// Lattice constant of the log kernel self term.
pub const LOG_LATTICE_CONSTANT: f64 = 1.310_532_925_911_509_3;

/// Relative tolerance of the neutrality check on input data.
pub const NEUTRALITY_TOL: f64 = 1e-8;

/// Neutrality tolerance inside time integration, where the interpolation
/// steps are allowed a small mass drift.
pub const RUN_NEUTRALITY_TOL: f64 = 1e-6;

pub struct PoissonSolver {
    grid: SpatialGrid,
    padded: usize,
    coupling: f64,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    potential_kernel: Vec<Complex64>,
    /// Transform of `K1 + i K2`, packing both field components.
    field_kernel: Vec<Complex64>,
    neutrality_tol: Option<f64>,
    neutrality_scale: f64,
}

impl PoissonSolver {
    pub fn new(grid: &SpatialGrid, params: &PhysicsParams) -> Result<Self> {
        params.validate()?;
        let n = grid.n();
        let p = 2 * n;
        let h = grid.dx();
        let mut planner = FftPlanner::<f64>::new();
        let forward = planner.plan_fft_forward(p);
        let inverse = planner.plan_fft_inverse(p);

        let mut potential_kernel = vec![Complex64::new(0.0, 0.0); p * p];
        let mut field_kernel = vec![Complex64::new(0.0, 0.0); p * p];
        let wrap = |i: usize| if i < n { i as f64 } else { i as f64 - p as f64 };
        for a in 0..p {
            for b in 0..p {
                let (r1, r2) = (wrap(a) * h, wrap(b) * h);
                let r2sum = r1 * r1 + r2 * r2;
                let k = a * p + b;
                if a == 0 && b == 0 {
                    potential_kernel[k].re = -(h.ln() - LOG_LATTICE_CONSTANT) / (2.0 * PI);
                } else {
                    potential_kernel[k].re = -0.25 * r2sum.ln() / PI;
                    field_kernel[k] = Complex64::new(r1, r2) / (2.0 * PI * r2sum);
                }
            }
        }
        fft2(&mut potential_kernel, p, forward.as_ref());
        fft2(&mut field_kernel, p, forward.as_ref());

        Ok(Self {
            grid: *grid,
            padded: p,
            coupling: params.q / params.eps0,
            forward,
            inverse,
            potential_kernel,
            field_kernel,
            neutrality_tol: Some(NEUTRALITY_TOL),
            neutrality_scale: 0.0,
        })
    }

    /// Disables the neutrality check (for oracle tests with non-neutral charge).
    pub fn relaxed(mut self) -> Self {
        self.neutrality_tol = None;
        self
    }

    pub fn with_neutrality_tol(mut self, tol: f64) -> Self {
        self.neutrality_tol = Some(tol);
        self
    }

    /// Floor for the charge scale the neutrality check is relative to,
    /// in units of summed node values. Solvers pass the background so a
    /// plasma sitting on its background is not judged against round-off.
    pub fn with_neutrality_scale(mut self, scale: f64) -> Self {
        self.neutrality_scale = scale;
        self
    }

    pub fn neutrality_tol(&self) -> Option<f64> {
        self.neutrality_tol
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn check_neutrality(&self, rho_net: &Density) -> Result<()> {
        match self.neutrality_tol {
            Some(tol) => check_neutrality_scaled(rho_net, self.neutrality_scale, tol),
            None => Ok(()),
        }
    }

    fn check_grid(&self, rho: &Density) -> Result<()> {
        if rho.grid != self.grid {
            return Err(Error::InvalidInput(
                "density grid differs from solver grid".into(),
            ));
        }
        Ok(())
    }

    fn charge_spectrum(&self, rho: &Density) -> Vec<Complex64> {
        let (n, p) = (self.grid.n(), self.padded);
        let mut buf = vec![Complex64::new(0.0, 0.0); p * p];
        for i in 0..n {
            for j in 0..n {
                buf[i * p + j].re = rho.values[i * n + j];
            }
        }
        fft2(&mut buf, p, self.forward.as_ref());
        buf
    }

    fn convolve(&self, spectrum: &[Complex64], kernel: &[Complex64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = spectrum.iter().zip(kernel).map(|(a, b)| a * b).collect();
        fft2(&mut buf, self.padded, self.inverse.as_ref());
        buf
    }

    fn potential_from_spectrum(&self, spectrum: &[Complex64]) -> Potential {
        let (n, p) = (self.grid.n(), self.padded);
        let conv = self.convolve(spectrum, &self.potential_kernel);
        let scale = self.coupling * self.grid.cell_area() / (p * p) as f64;
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                values[i * n + j] = conv[i * p + j].re * scale;
            }
        }
        Potential {
            grid: self.grid,
            values,
        }
    }

    fn field_from_spectrum(&self, rho: &Density, spectrum: &[Complex64]) -> Field {
        let (n, p) = (self.grid.n(), self.padded);
        let h = self.grid.dx();
        let conv = self.convolve(spectrum, &self.field_kernel);
        let scale = self.coupling * self.grid.cell_area() / (p * p) as f64;
        let local = -self.coupling * h * h / (4.0 * PI);
        let mut field = Field::zeros(self.grid);
        let at = |i: isize, j: isize| -> f64 {
            if i < 0 || j < 0 || i >= n as isize || j >= n as isize {
                0.0
            } else {
                rho.values[i as usize * n + j as usize]
            }
        };
        for i in 0..n {
            for j in 0..n {
                let (ii, jj) = (i as isize, j as isize);
                let d1 = (at(ii + 1, jj) - at(ii - 1, jj)) / (2.0 * h);
                let d2 = (at(ii, jj + 1) - at(ii, jj - 1)) / (2.0 * h);
                let c = conv[i * p + j];
                field.x1[i * n + j] = c.re * scale + local * d1;
                field.x2[i * n + j] = c.im * scale + local * d2;
            }
        }
        field
    }

    pub fn solve_potential(&self, rho_net: &Density) -> Result<Potential> {
        self.check_grid(rho_net)?;
        self.check_neutrality(rho_net)?;
        Ok(self.potential_from_spectrum(&self.charge_spectrum(rho_net)))
    }

    pub fn field_from_charge(&self, rho_net: &Density) -> Result<Field> {
        self.check_grid(rho_net)?;
        self.check_neutrality(rho_net)?;
        Ok(self.field_from_spectrum(rho_net, &self.charge_spectrum(rho_net)))
    }

    /// Potential and field from a single forward transform.
    pub fn solve(&self, rho_net: &Density) -> Result<(Potential, Field)> {
        self.check_grid(rho_net)?;
        self.check_neutrality(rho_net)?;
        let spectrum = self.charge_spectrum(rho_net);
        Ok((
            self.potential_from_spectrum(&spectrum),
            self.field_from_spectrum(rho_net, &spectrum),
        ))
    }
}

/// Fails unless `|sum rho| <= tol * sum |rho|`.
pub fn check_neutrality(rho_net: &Density, tol: f64) -> Result<()> {
    check_neutrality_scaled(rho_net, 0.0, tol)
}

/// Fails unless `|sum rho| <= tol * max(sum |rho|, scale)`.
pub fn check_neutrality_scaled(rho_net: &Density, scale: f64, tol: f64) -> Result<()> {
    let net = sum::pairwise(&rho_net.values);
    let abs = sum::pairwise_map(rho_net.values.len(), |k| rho_net.values[k].abs()).max(scale);
    if net.abs() > tol * abs {
        return Err(Error::Neutrality {
            net: net.abs(),
            abs,
            tol,
        });
    }
    Ok(())
}

/// `(eps0 / 2m) sum |E|^2 dx^2`.
pub fn field_energy(e: &Field, params: &PhysicsParams) -> f64 {
    let s = sum::pairwise_map(e.x1.len(), |k| e.x1[k] * e.x1[k] + e.x2[k] * e.x2[k]);
    0.5 * params.eps0 / params.m * s * e.grid.cell_area()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::DensityRole;

    fn setup(n: usize) -> (SpatialGrid, PhysicsParams) {
        (SpatialGrid::new(8.0, n).unwrap(), PhysicsParams::default())
    }

    #[test]
    fn zero_charge_gives_zero() {
        let (g, p) = setup(16);
        let s = PoissonSolver::new(&g, &p).unwrap();
        let rho = Density::zeros(g, DensityRole::NetCharge);
        let (phi, e) = s.solve(&rho).unwrap();
        assert!(phi.values.iter().all(|v| *v == 0.0));
        assert_eq!(e.sup_norm(), 0.0);
        assert_eq!(field_energy(&e, &p), 0.0);
    }

    #[test]
    fn constant_field_energy() {
        let (g, p) = setup(16);
        let mut e = Field::zeros(g);
        e.x1.iter_mut().for_each(|v| *v = 3.0);
        e.x2.iter_mut().for_each(|v| *v = 4.0);
        let expected = 0.5 * 25.0 * 256.0;
        assert!((field_energy(&e, &p) - expected).abs() < 1e-10);
    }

    #[test]
    fn rejects_non_neutral() {
        let (g, p) = setup(16);
        let s = PoissonSolver::new(&g, &p).unwrap();
        let rho =
            Density::from_fn(g, DensityRole::NetCharge, |a, b| (-(a * a + b * b)).exp()).unwrap();
        let err = s.solve(&rho).unwrap_err();
        assert!(err.to_string().contains("neutrality"));
        assert!(s.relaxed().solve(&rho).is_ok());
    }

    #[test]
    fn point_charge_matches_direct_kernel() {
        let (g, p) = setup(32);
        let s = PoissonSolver::new(&g, &p).unwrap().relaxed();
        let mut rho = Density::zeros(g, DensityRole::NetCharge);
        let src = g.index(16, 16);
        let charge = 2.0;
        rho.values[src] = charge / g.cell_area();
        let phi = s.solve_potential(&rho).unwrap();
        let [s1, s2] = g.position(src);
        for k in [g.index(0, 0), g.index(5, 30), g.index(16, 28)] {
            let [x1, x2] = g.position(k);
            let r = (x1 - s1).hypot(x2 - s2);
            let expected = -charge * r.ln() / (2.0 * PI);
            assert!(
                (phi.values[k] - expected).abs() < 1e-12,
                "{} vs {expected}",
                phi.values[k]
            );
        }
    }

    #[test]
    fn mirror_symmetry() {
        let (g, p) = setup(32);
        let s = PoissonSolver::new(&g, &p).unwrap().relaxed();
        let rho = Density::from_fn(g, DensityRole::NetCharge, |a, b| {
            (-(a * a + (b - 1.0).powi(2))).exp() * (1.0 + 0.3 * b)
        })
        .unwrap();
        let e = s.field_from_charge(&rho).unwrap();
        let n = g.n();
        for i in 0..n {
            for j in 0..n {
                let (k, m) = (g.index(i, j), g.index(n - 1 - i, j));
                assert!((e.x1[k] + e.x1[m]).abs() < 1e-12);
                assert!((e.x2[k] - e.x2[m]).abs() < 1e-12);
            }
        }
    }
}

#[cfg(test)]
mod oracle_tests {
    use super::*;
    use crate::fields::DensityRole;

    fn enclosed_gaussian(r: f64) -> f64 {
        1.0 - (-r * r).exp()
    }

    #[test]
    fn gauss_law_radial_gaussian() {
        let g = SpatialGrid::new(8.0, 128).unwrap();
        let p = PhysicsParams::default();
        let s = PoissonSolver::new(&g, &p).unwrap().relaxed();
        let rho =
            Density::from_fn(g, DensityRole::Plasma, |a, b| (-(a * a + b * b)).exp() / PI).unwrap();
        let e = s.field_from_charge(&rho).unwrap();
        let mut num: f64 = 0.0;
        let mut den: f64 = 0.0;
        for k in 0..g.len() {
            let [x1, x2] = g.position(k);
            let r = x1.hypot(x2);
            let mag = enclosed_gaussian(r) / (2.0 * PI * r);
            num = num.max(
                (e.x1[k] - mag * x1 / r)
                    .abs()
                    .max((e.x2[k] - mag * x2 / r).abs()),
            );
            den = den.max(mag);
        }
        eprintln!("gauss law rel Linf {}", num / den);
        assert!(num / den < 1e-4, "relative error {}", num / den);
    }
}
