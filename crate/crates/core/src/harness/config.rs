use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{Density, DensityRole};
use crate::grid::{make_grids, PhysicsParams, SpatialGrid, VelocityGrid};
use crate::guiding_center::LimitOptions;
use crate::kinetic::KineticOptions;
use crate::magnetic::MagneticSpec;

/// What a run computes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Kinetic,
    Limit,
    Sweep,
    Compare,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Half width `L` of the box `[-L, L]^2`.
    #[serde(default = "default_half_width")]
    pub half_width: f64,
    #[serde(default = "default_nx")]
    pub nx: usize,
    #[serde(default = "default_v_max")]
    pub v_max: f64,
    #[serde(default = "default_nv")]
    pub nv: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            half_width: default_half_width(),
            nx: default_nx(),
            v_max: default_v_max(),
            nv: default_nv(),
        }
    }
}

/// Initial plasma density `n_in`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    /// `mass / (pi w^2) exp(-|x - c|^2 / w^2)`.
    Gaussian {
        center: [f64; 2],
        width: f64,
        mass: f64,
    },
    /// Gaussian ring `exp(-(|x - c| - r)^2 / w^2)` scaled to `mass`.
    Ring {
        center: [f64; 2],
        radius: f64,
        width: f64,
        mass: f64,
    },
    /// `n_in` equal to the neutralizing background (zero initial field).
    Background { mass: f64 },
}

impl Default for InitialSpec {
    fn default() -> Self {
        InitialSpec::Gaussian {
            center: [1.0, 0.0],
            width: 1.0,
            mass: 1.0,
        }
    }
}

/// Full description of a run. Every field except `scenario` has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: String,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default = "default_physics")]
    pub physics: PhysicsParams,
    #[serde(default = "default_magnetic")]
    pub magnetic: MagneticSpec,
    #[serde(default)]
    pub initial: InitialSpec,
    /// Width of the Gaussian neutralizing background.
    #[serde(default = "default_background_width")]
    pub background_width: f64,
    /// Relative amplitude of the seeded multiplicative noise on `n_in`.
    #[serde(default)]
    pub perturbation: f64,
    #[serde(default)]
    pub seed: u64,
    /// Upper bound on the kinetic step; the stability bound also applies.
    #[serde(default = "default_dt_max")]
    pub dt_max: f64,
    /// Upper bound on the limit-solver step.
    #[serde(default = "default_limit_dt_max")]
    pub limit_dt_max: f64,
    /// When false, `dt_max` is used as the kinetic step as given.
    #[serde(default = "default_true")]
    pub enforce_stability: bool,
    /// Number of equal snapshot intervals over `[0, T]`.
    #[serde(default = "default_intervals")]
    pub snapshot_intervals: usize,
    /// Write the phase-space distribution with each kinetic snapshot.
    #[serde(default = "default_true")]
    pub write_distribution: bool,
    #[serde(default)]
    pub eps_list: Vec<f64>,
    #[serde(default)]
    pub kinetic: KineticOptions,
    #[serde(default)]
    pub limit: LimitOptions,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn default_half_width() -> f64 {
    8.0
}
fn default_nx() -> usize {
    64
}
fn default_v_max() -> f64 {
    6.0
}
fn default_nv() -> usize {
    48
}
fn default_mode() -> Mode {
    Mode::Kinetic
}
fn default_physics() -> PhysicsParams {
    PhysicsParams {
        eps: 0.1,
        ..PhysicsParams::default()
    }
}
fn default_magnetic() -> MagneticSpec {
    MagneticSpec::Uniform { b0: 1.0 }
}
fn default_background_width() -> f64 {
    1.5
}
fn default_dt_max() -> f64 {
    0.05
}
fn default_limit_dt_max() -> f64 {
    5e-3
}
fn default_true() -> bool {
    true
}
fn default_intervals() -> usize {
    10
}

impl RunConfig {
    /// Reference scenario with all defaults.
    pub fn reference(scenario: &str) -> Self {
        serde_json::from_value(serde_json::json!({ "scenario": scenario }))
            .expect("defaults deserialize")
    }

    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        let config: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config {
            path: origin.to_string(),
            message: format!("line {} column {}: {e}", e.line(), e.column()),
        })?;
        config.validate().map_err(|e| match e {
            Error::Config { message, .. } => Error::Config {
                path: origin.to_string(),
                message,
            },
            other => other,
        })?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, message: String| Error::Config {
            path: String::new(),
            message: format!("{field}: {message}"),
        };
        let wrap = |field: &str, e: Error| bad(field, e.to_string());
        if self.scenario.trim().is_empty() {
            return Err(bad("scenario", "must not be empty".into()));
        }
        self.physics.validate().map_err(|e| wrap("physics", e))?;
        self.grids().map_err(|e| wrap("grid", e))?;
        self.magnetic.validate().map_err(|e| wrap("magnetic", e))?;
        match self.initial {
            InitialSpec::Gaussian { width, mass, .. } | InitialSpec::Ring { width, mass, .. } => {
                if !(width > 0.0 && width.is_finite()) {
                    return Err(bad(
                        "initial.width",
                        format!("must be positive, got {width}"),
                    ));
                }
                if !(mass > 0.0 && mass.is_finite()) {
                    return Err(bad("initial.mass", format!("must be positive, got {mass}")));
                }
            }
            InitialSpec::Background { mass } => {
                if !(mass > 0.0 && mass.is_finite()) {
                    return Err(bad("initial.mass", format!("must be positive, got {mass}")));
                }
            }
        }
        if let InitialSpec::Ring { radius, .. } = self.initial {
            if !(radius >= 0.0 && radius.is_finite()) {
                return Err(bad("initial.radius", format!("must be >= 0, got {radius}")));
            }
        }
        let positive = [
            ("background_width", self.background_width),
            ("dt_max", self.dt_max),
            ("limit_dt_max", self.limit_dt_max),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(bad(name, format!("must be positive and finite, got {v}")));
            }
        }
        if !(self.perturbation >= 0.0 && self.perturbation < 1.0) {
            return Err(bad(
                "perturbation",
                format!("must lie in [0, 1), got {}", self.perturbation),
            ));
        }
        if self.snapshot_intervals == 0 {
            return Err(bad("snapshot_intervals", "must be at least 1".into()));
        }
        if !(self.kinetic.clip_rel_tol >= 0.0 && self.limit.clip_rel_tol >= 0.0) {
            return Err(bad("clip_rel_tol", "must be >= 0".into()));
        }
        for (i, e) in self.eps_list.iter().enumerate() {
            if !(*e > 0.0 && *e <= 1.0) {
                return Err(bad("eps_list", format!("entry {i} = {e} is not in (0, 1]")));
            }
            if i > 0 && !(*e < self.eps_list[i - 1]) {
                return Err(bad(
                    "eps_list",
                    format!(
                        "must be strictly decreasing, entry {i} = {e} follows {}",
                        self.eps_list[i - 1]
                    ),
                ));
            }
        }
        if self.mode == Mode::Sweep && self.eps_list.is_empty() {
            return Err(bad("eps_list", "sweep mode needs at least one eps".into()));
        }
        Ok(())
    }

    pub fn grids(&self) -> Result<(SpatialGrid, VelocityGrid)> {
        make_grids(
            &self.physics,
            self.grid.half_width,
            self.grid.nx,
            self.grid.v_max,
            self.grid.nv,
        )
    }

    /// `n_in` sampled on `grid`, with the seeded perturbation applied and
    /// the mass restored to the requested value.
    pub fn initial_density(&self, grid: &SpatialGrid) -> Result<Density> {
        let (center, mass) = match self.initial {
            InitialSpec::Gaussian { center, mass, .. } | InitialSpec::Ring { center, mass, .. } => {
                (center, mass)
            }
            InitialSpec::Background { mass } => ([0.0, 0.0], mass),
        };
        let shape = |x1: f64, x2: f64| {
            let (d1, d2) = (x1 - center[0], x2 - center[1]);
            match self.initial {
                InitialSpec::Gaussian { width, .. } => {
                    (-(d1 * d1 + d2 * d2) / (width * width)).exp()
                }
                InitialSpec::Ring { radius, width, .. } => {
                    let r = d1.hypot(d2) - radius;
                    (-(r * r) / (width * width)).exp()
                }
                InitialSpec::Background { .. } => {
                    let w = self.background_width;
                    (-(x1 * x1 + x2 * x2) / (w * w)).exp()
                }
            }
        };
        let mut values = grid.sample(shape);
        if self.perturbation > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            for v in values.iter_mut() {
                *v *= 1.0 + self.perturbation * rng.gen_range(-1.0..1.0);
            }
        }
        let total = crate::sum::pairwise(&values) * grid.cell_area();
        if !(total > 0.0) {
            return Err(Error::InvalidInput(
                "initial density has no mass on the grid".into(),
            ));
        }
        values.iter_mut().for_each(|v| *v *= mass / total);
        Density::new(*grid, values, DensityRole::Plasma)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_json(&text, &path.display().to_string())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Reads and validates a config file.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    RunConfig::load(path)
}
