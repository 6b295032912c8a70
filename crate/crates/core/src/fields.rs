//! Field containers on the spatial grid and the phase-space distribution.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::grid::{SpatialGrid, VelocityGrid};
use crate::sum;

/// What a [`Density`] represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DensityRole {
    /// Concentration of the kinetic plasma, `n[f]`.
    Plasma,
    /// Fixed neutralizing background `D`.
    Background,
    /// Concentration of the guiding-center limit model.
    Limit,
    /// Net charge density `n - D` (may be negative).
    NetCharge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Density {
    pub grid: SpatialGrid,
    pub values: Vec<f64>,
    pub role: DensityRole,
}

impl Density {
    pub fn new(grid: SpatialGrid, values: Vec<f64>, role: DensityRole) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidInput(format!(
                "density has {} values, grid has {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("density value {v}")));
        }
        if role != DensityRole::NetCharge {
            if let Some(v) = values.iter().find(|v| **v < 0.0) {
                return Err(Error::InvalidInput(format!(
                    "{role:?} density must be non-negative, found {v}"
                )));
            }
        }
        Ok(Self { grid, values, role })
    }

    pub fn zeros(grid: SpatialGrid, role: DensityRole) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
            role,
        }
    }

    pub fn from_fn(
        grid: SpatialGrid,
        role: DensityRole,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Self> {
        Self::new(grid, grid.sample(f), role)
    }

    pub fn mass(&self) -> f64 {
        sum::pairwise(&self.values) * self.grid.cell_area()
    }

    /// `self - other` tagged as a net charge.
    pub fn net_charge(&self, other: &Density) -> Density {
        Density {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
            role: DensityRole::NetCharge,
        }
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Potential {
    pub grid: SpatialGrid,
    pub values: Vec<f64>,
}

/// Two-component vector field on the spatial grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub grid: SpatialGrid,
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: SpatialGrid) -> Self {
        Self {
            grid,
            x1: vec![0.0; grid.len()],
            x2: vec![0.0; grid.len()],
        }
    }

    #[inline]
    pub fn at(&self, k: usize) -> [f64; 2] {
        [self.x1[k], self.x2[k]]
    }

    pub fn sup_norm(&self) -> f64 {
        self.x1
            .iter()
            .zip(&self.x2)
            .map(|(a, b)| a.hypot(*b))
            .fold(0.0, f64::max)
    }

    /// Sup-norm of the pointwise difference.
    pub fn sup_distance(&self, other: &Field) -> f64 {
        (0..self.x1.len())
            .map(|k| (self.x1[k] - other.x1[k]).hypot(self.x2[k] - other.x2[k]))
            .fold(0.0, f64::max)
    }

    /// `sum |E - F|^2 dx^2`.
    pub fn squared_l2_distance(&self, other: &Field) -> f64 {
        sum::pairwise_map(self.x1.len(), |k| {
            let a = self.x1[k] - other.x1[k];
            let b = self.x2[k] - other.x2[k];
            a * a + b * b
        }) * self.grid.cell_area()
    }
}

/// Phase-space density `f[i1, i2, j1, j2]`, row-major with the velocity
/// block of each spatial node contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    pub spatial: SpatialGrid,
    pub velocity: VelocityGrid,
    pub values: Vec<f64>,
}

impl Distribution {
    pub fn zeros(spatial: SpatialGrid, velocity: VelocityGrid) -> Self {
        Self {
            spatial,
            velocity,
            values: vec![0.0; spatial.len() * velocity.len()],
        }
    }

    pub fn new(spatial: SpatialGrid, velocity: VelocityGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != spatial.len() * velocity.len() {
            return Err(Error::InvalidInput(format!(
                "distribution has {} values, expected {}",
                values.len(),
                spatial.len() * velocity.len()
            )));
        }
        Ok(Self {
            spatial,
            velocity,
            values,
        })
    }

    /// Fills `f(x, v) = g(x1, x2, v1, v2)`.
    pub fn from_fn(
        spatial: SpatialGrid,
        velocity: VelocityGrid,
        g: impl Fn(f64, f64, f64, f64) -> f64,
    ) -> Self {
        let nv2 = velocity.len();
        let mut values = vec![0.0; spatial.len() * nv2];
        for (k, block) in values.chunks_exact_mut(nv2).enumerate() {
            let [x1, x2] = spatial.position(k);
            for (j, f) in block.iter_mut().enumerate() {
                let [v1, v2] = velocity.velocity(j);
                *f = g(x1, x2, v1, v2);
            }
        }
        Self {
            spatial,
            velocity,
            values,
        }
    }

    #[inline]
    pub fn block_len(&self) -> usize {
        self.velocity.len()
    }

    #[inline]
    pub fn block(&self, k: usize) -> &[f64] {
        let b = self.block_len();
        &self.values[k * b..(k + 1) * b]
    }

    #[inline]
    pub fn phase_cell(&self) -> f64 {
        self.spatial.cell_area() * self.velocity.cell_area()
    }

    pub fn mass(&self) -> f64 {
        let dv2 = self.velocity.cell_area();
        sum::blocked(&self.values, self.block_len(), |_, b| sum::pairwise(b))
            * dv2
            * self.spatial.cell_area()
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.values.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(i) => Err(Error::NonFinite(format!(
                "distribution value {} at flat index {i}",
                self.values[i]
            ))),
        }
    }
}

/// Discrete Maxwellian `M(v) = (2 pi sigma)^-1 exp(-|v|^2 / (2 sigma))`
/// sampled on the velocity grid (not renormalized).
#[derive(Debug, Clone, PartialEq)]
pub struct Maxwellian {
    pub grid: VelocityGrid,
    pub sigma: f64,
    pub values: Vec<f64>,
    /// Discrete integral `sum M dv^2`.
    pub integral: f64,
}

impl Maxwellian {
    /// Signed quadrature defect `sum M dv^2 - 1`.
    pub fn quadrature_defect(&self) -> f64 {
        self.integral - 1.0
    }
}

pub fn maxwellian_value(v1: f64, v2: f64, sigma: f64) -> f64 {
    (-(v1 * v1 + v2 * v2) / (2.0 * sigma)).exp() / (2.0 * PI * sigma)
}

pub fn maxwellian(grid: &VelocityGrid, sigma: f64) -> Result<Maxwellian> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::InvalidParams(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    let values = grid.sample(|v1, v2| maxwellian_value(v1, v2, sigma));
    let integral = sum::pairwise(&values) * grid.cell_area();
    Ok(Maxwellian {
        grid: *grid,
        sigma,
        values,
        integral,
    })
}

/// Gaussian neutralizing background `D(x) = A exp(-|x|^2 / w^2)` whose discrete
/// mass equals the discrete mass of `n_in`.
pub fn neutral_background(n_in: &Density, width: f64) -> Result<Density> {
    if !(width.is_finite() && width > 0.0) {
        return Err(Error::InvalidInput(format!(
            "background width must be positive, got {width}"
        )));
    }
    if n_in.values.iter().any(|v| *v < 0.0) {
        return Err(Error::InvalidInput("n_in must be non-negative".into()));
    }
    let mass = n_in.mass();
    if !(mass > 0.0) {
        return Err(Error::InvalidInput(
            "n_in must have positive mass to build a neutralizing background".into(),
        ));
    }
    let grid = n_in.grid;
    let profile = grid.sample(|x1, x2| (-(x1 * x1 + x2 * x2) / (width * width)).exp());
    let profile_mass = sum::pairwise(&profile) * grid.cell_area();
    let amplitude = mass / profile_mass;
    let values = profile.iter().map(|p| amplitude * p).collect();
    Density::new(grid, values, DensityRole::Background)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> SpatialGrid {
        SpatialGrid::new(8.0, 64).unwrap()
    }

    #[test]
    fn maxwellian_point_values() {
        assert!((maxwellian_value(0.0, 0.0, 1.0) - 0.159_154_943_091_895_35).abs() < 1e-15);
        let v = maxwellian_value(1.0, 1.0, 1.0);
        assert!((v - (-1.0f64).exp() / (2.0 * PI)).abs() < 1e-16);
    }

    #[test]
    fn maxwellian_quadrature_defect_small() {
        // Reference value: a much finer midpoint quadrature over a wider box.
        let fine = VelocityGrid::new(9.0, 360).unwrap();
        let reference = maxwellian(&fine, 1.0).unwrap().integral;
        assert!((reference - 1.0).abs() < 1e-14);
        let m = maxwellian(&VelocityGrid::new(6.0, 48).unwrap(), 1.0).unwrap();
        assert!(
            m.quadrature_defect().abs() < 1e-8,
            "{}",
            m.quadrature_defect()
        );
        assert!(m.values.iter().all(|v| *v > 0.0));
    }

    #[test]
    fn background_matches_mass() {
        let g = grid();
        let n_in = Density::from_fn(g, DensityRole::Plasma, |a, b| {
            (-((a - 1.0).powi(2) + b * b)).exp() / PI
        })
        .unwrap();
        let d = neutral_background(&n_in, 1.5).unwrap();
        assert!((d.mass() - n_in.mass()).abs() <= 1e-12 * n_in.mass());
        assert!(d.values.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn background_amplitude_for_gaussian_input() {
        let g = grid();
        let w_in: f64 = 1.0;
        let n_in = Density::from_fn(g, DensityRole::Plasma, |a, b| {
            2.5 * (-(a * a + b * b) / (w_in * w_in)).exp() / (PI * w_in * w_in)
        })
        .unwrap();
        let w_d: f64 = 1.5;
        let d = neutral_background(&n_in, w_d).unwrap();
        // Independent quadrature of the background profile.
        let mut profile_mass = 0.0;
        for k in 0..g.len() {
            let [a, b] = g.position(k);
            profile_mass += (-(a * a + b * b) / (w_d * w_d)).exp() * g.cell_area();
        }
        let normalizer = profile_mass / (PI * w_d * w_d);
        let expected = n_in.mass() / (PI * w_d * w_d * normalizer);
        let centre = d.values[g.index(31, 31)] / (-(2.0 * 0.125f64.powi(2)) / (w_d * w_d)).exp();
        assert!((centre - expected).abs() < 1e-12 * expected);
        assert!((n_in.mass() - 2.5).abs() < 1e-10);
    }

    #[test]
    fn background_of_itself_is_neutral() {
        let g = grid();
        let n_in = Density::from_fn(g, DensityRole::Plasma, |a, b| {
            (-(a * a + b * b) / 2.25).exp()
        })
        .unwrap();
        let d = neutral_background(&n_in, 1.5).unwrap();
        let net = n_in.net_charge(&d);
        assert!(net.values.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn background_rejects_zero_mass() {
        let n_in = Density::zeros(grid(), DensityRole::Plasma);
        assert!(neutral_background(&n_in, 1.0).is_err());
    }
}
