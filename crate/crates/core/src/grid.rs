//! Cell-centered tensor grids and physical parameters.
//!
//! Both the spatial box `[-L, L]^2` and the velocity box `[-v_max, v_max]^2`
//! are discretized with cell-centered nodes `-L + (i + 1/2) h`, so no node
//! sits on the origin where the logarithmic kernel is singular. Quadrature is
//! the plain cell sum: the weight of every node is `h^2`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest number of spatial points per axis accepted by [`SpatialGrid`].
pub const MIN_SPATIAL_POINTS: usize = 8;

/// Velocity box half-width must be at least this many thermal speeds.
pub const VELOCITY_TAIL_FACTOR: f64 = 6.0;

/// A uniform cell-centered axis on `[-half_width, half_width]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    half_width: f64,
    n: usize,
    spacing: f64,
}

impl Axis {
    pub fn new(half_width: f64, n: usize) -> Result<Self> {
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "half width must be positive, got {half_width}"
            )));
        }
        if n < 2 || !n.is_multiple_of(2) {
            return Err(Error::InvalidGrid(format!(
                "points per axis must be even and >= 2, got {n}"
            )));
        }
        Ok(Self {
            half_width,
            n,
            spacing: 2.0 * half_width / n as f64,
        })
    }

    #[inline]
    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    #[inline]
    pub fn node(&self, i: usize) -> f64 {
        -self.half_width + (i as f64 + 0.5) * self.spacing
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.node(i)).collect()
    }

    /// Fractional index of coordinate `x`, so that `node(i) == x` gives `i`.
    #[inline]
    pub fn fractional_index(&self, x: f64) -> f64 {
        (x + self.half_width) / self.spacing - 0.5
    }

    #[inline]
    pub fn contains(&self, x: f64) -> bool {
        x.abs() <= self.half_width
    }
}

/// Spatial box `[-L, L]^2` with `Nx` cell-centered nodes per axis, row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatialGrid {
    axis: Axis,
}

impl SpatialGrid {
    pub fn new(half_width: f64, n: usize) -> Result<Self> {
        let axis = Axis::new(half_width, n)?;
        if n < MIN_SPATIAL_POINTS {
            return Err(Error::InvalidGrid(format!(
                "spatial grid needs at least {MIN_SPATIAL_POINTS} points per axis, got {n}"
            )));
        }
        Ok(Self { axis })
    }

    #[inline]
    pub fn axis(&self) -> &Axis {
        &self.axis
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.axis.n
    }

    #[inline]
    pub fn half_width(&self) -> f64 {
        self.axis.half_width
    }

    #[inline]
    pub fn dx(&self) -> f64 {
        self.axis.spacing
    }

    #[inline]
    pub fn cell_area(&self) -> f64 {
        self.axis.spacing * self.axis.spacing
    }

    /// Number of spatial nodes, `Nx^2`.
    #[inline]
    pub fn len(&self) -> usize {
        self.axis.n * self.axis.n
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i1: usize, i2: usize) -> usize {
        i1 * self.axis.n + i2
    }

    #[inline]
    pub fn position(&self, k: usize) -> [f64; 2] {
        let n = self.axis.n;
        [self.axis.node(k / n), self.axis.node(k % n)]
    }

    /// Samples `f(x1, x2)` at every node.
    pub fn sample(&self, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        (0..self.len())
            .map(|k| {
                let [x1, x2] = self.position(k);
                f(x1, x2)
            })
            .collect()
    }
}

/// Velocity box `[-v_max, v_max]^2` with `Nv` cell-centered nodes per axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityGrid {
    axis: Axis,
}

impl VelocityGrid {
    pub fn new(v_max: f64, n: usize) -> Result<Self> {
        Ok(Self {
            axis: Axis::new(v_max, n)?,
        })
    }

    #[inline]
    pub fn axis(&self) -> &Axis {
        &self.axis
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.axis.n
    }

    #[inline]
    pub fn v_max(&self) -> f64 {
        self.axis.half_width
    }

    #[inline]
    pub fn dv(&self) -> f64 {
        self.axis.spacing
    }

    #[inline]
    pub fn cell_area(&self) -> f64 {
        self.axis.spacing * self.axis.spacing
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.axis.n * self.axis.n
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn velocity(&self, k: usize) -> [f64; 2] {
        let n = self.axis.n;
        [self.axis.node(k / n), self.axis.node(k % n)]
    }

    pub fn sample(&self, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        (0..self.len())
            .map(|k| {
                let [v1, v2] = self.velocity(k);
                f(v1, v2)
            })
            .collect()
    }
}

/// Physical constants of the scaled system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicsParams {
    #[serde(default = "one")]
    pub q: f64,
    #[serde(default = "one")]
    pub m: f64,
    /// Velocity diffusion, in velocity^2 units.
    #[serde(default = "one")]
    pub sigma: f64,
    /// Relaxation time of the Fokker-Planck operator.
    #[serde(default = "one")]
    pub tau: f64,
    #[serde(default = "one")]
    pub eps0: f64,
    /// Scaling parameter, ratio of cyclotron period to advection time.
    #[serde(default = "one")]
    pub eps: f64,
    #[serde(default = "half")]
    pub final_time: f64,
}

fn one() -> f64 {
    1.0
}

fn half() -> f64 {
    0.5
}

impl Default for PhysicsParams {
    fn default() -> Self {
        Self {
            q: 1.0,
            m: 1.0,
            sigma: 1.0,
            tau: 1.0,
            eps0: 1.0,
            eps: 1.0,
            final_time: 0.5,
        }
    }
}

impl PhysicsParams {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("q", self.q),
            ("m", self.m),
            ("sigma", self.sigma),
            ("tau", self.tau),
            ("eps0", self.eps0),
            ("eps", self.eps),
        ];
        for (name, value) in named {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidParams(format!(
                    "{name} must be strictly positive, got {value}"
                )));
            }
        }
        if self.eps > 1.0 {
            return Err(Error::InvalidParams(format!(
                "eps must lie in (0, 1], got {}",
                self.eps
            )));
        }
        if !(self.final_time.is_finite() && self.final_time >= 0.0) {
            return Err(Error::InvalidParams(format!(
                "final_time must be non-negative, got {}",
                self.final_time
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn charge_to_mass(&self) -> f64 {
        self.q / self.m
    }

    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps = eps;
        self
    }
}

/// Builds the spatial and velocity grids, enforcing the velocity tail
/// criterion `v_max >= 6 sqrt(sigma)`.
pub fn make_grids(
    params: &PhysicsParams,
    half_width: f64,
    nx: usize,
    v_max: f64,
    nv: usize,
) -> Result<(SpatialGrid, VelocityGrid)> {
    params.validate()?;
    let spatial = SpatialGrid::new(half_width, nx)?;
    let velocity = VelocityGrid::new(v_max, nv)?;
    let required = VELOCITY_TAIL_FACTOR * params.sigma.sqrt();
    if v_max < required {
        return Err(Error::InvalidGrid(format!(
            "v_max = {v_max} is below 6 sqrt(sigma) = {required}"
        )));
    }
    Ok((spatial, velocity))
}
