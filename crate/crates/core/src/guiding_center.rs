//! Guiding-center limit: `dn/dt + div(n U) = 0` with the drift
//! `U = perp(E)/B - sigma perp(grad omega_c)/omega_c^2` and `E` the field
//! of `n - D`.
//!
//! Each step maps `n'(x) = B(x) n(X) / B(X)` where `X` is the backward
//! characteristic foot of `x`. Since `div(B U) = 0` the flow preserves the
//! measure `B dx`, so the ratio weight keeps `n/B` constant along paths.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::FreeEnergy;
use crate::error::{Error, Result};
use crate::fields::{Density, DensityRole, Field, Potential};
use crate::grid::{PhysicsParams, SpatialGrid};
use crate::magnetic::MagneticField;
use crate::poisson::{
    check_neutrality_scaled, field_energy, PoissonSolver, NEUTRALITY_TOL, RUN_NEUTRALITY_TOL,
};
use crate::spline::PeriodicSpline2d;
use crate::sum;

/// `perp(w) = (w2, -w1)`.
#[inline]
pub fn perp(w: [f64; 2]) -> [f64; 2] {
    [w[1], -w[0]]
}

/// Drift velocity on the grid.
pub fn drift_velocity(e: &Field, magnetic: &MagneticField, sigma: f64) -> Field {
    let mut u = Field::zeros(e.grid);
    for k in 0..e.grid.len() {
        let [p1, p2] = perp(e.at(k));
        let [g1, g2] = perp([magnetic.grad_omega_c[0][k], magnetic.grad_omega_c[1][k]]);
        let (b, w) = (magnetic.b[k], magnetic.omega_c[k]);
        u.x1[k] = p1 / b - sigma * g1 / (w * w);
        u.x2[k] = p2 / b - sigma * g2 / (w * w);
    }
    u
}

/// Cubic-spline reconstruction of a vector field.
pub struct FieldSpline {
    c1: PeriodicSpline2d,
    c2: PeriodicSpline2d,
}

impl FieldSpline {
    pub fn new(field: &Field) -> Self {
        let g = field.grid;
        let origin = g.axis().node(0);
        Self {
            c1: PeriodicSpline2d::new(g.n(), origin, g.dx(), &field.x1),
            c2: PeriodicSpline2d::new(g.n(), origin, g.dx(), &field.x2),
        }
    }

    #[inline]
    pub fn eval(&self, x: [f64; 2]) -> [f64; 2] {
        [self.c1.eval(x[0], x[1]), self.c2.eval(x[0], x[1])]
    }
}

/// Backward RK4 foot point of `dX/ds = u(X, s)` over one step: `X(1) = x`,
/// returns `X(0)`. Time `s` is the fraction of the step, `dt` its length.
pub fn trace_back(u: impl Fn([f64; 2], f64) -> [f64; 2], x: [f64; 2], dt: f64) -> [f64; 2] {
    if dt == 0.0 {
        return x;
    }
    let at = |p: [f64; 2], c: f64, k: [f64; 2]| [p[0] - c * k[0], p[1] - c * k[1]];
    let k1 = u(x, 1.0);
    let k2 = u(at(x, 0.5 * dt, k1), 0.5);
    let k3 = u(at(x, 0.5 * dt, k2), 0.5);
    let k4 = u(at(x, dt, k3), 0.0);
    [
        x[0] - dt / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        x[1] - dt / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
    ]
}

#[derive(Debug, Clone)]
pub struct LimitState {
    pub t: f64,
    pub n: Density,
    pub e: Field,
    pub phi: Potential,
    pub drift: Field,
    /// `A[n] = n U`.
    pub flux: Field,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitOptions {
    /// Negative values above `-clip_rel_tol * max n` are zeroed.
    #[serde(default = "default_clip")]
    pub clip_rel_tol: f64,
}

fn default_clip() -> f64 {
    crate::kinetic::DEFAULT_CLIP_REL_TOL
}

impl Default for LimitOptions {
    fn default() -> Self {
        Self {
            clip_rel_tol: default_clip(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LimitStepReport {
    pub dt: f64,
    pub clipped_mass: f64,
}

/// Whether the Picard map evolves the seed over a step or keeps it frozen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PicardMode {
    /// `n^E` is the seed advanced over `dt` under the frozen drift of `E`.
    Step { dt: f64 },
    /// `n^E` is the seed itself.
    Frozen,
}

#[derive(Debug, Clone)]
pub struct PicardOutcome {
    pub e: Field,
    pub iterations: usize,
    pub residuals: Vec<f64>,
}

pub struct LimitSolver {
    pub params: PhysicsParams,
    pub grid: SpatialGrid,
    pub magnetic: MagneticField,
    pub background: Density,
    pub poisson: PoissonSolver,
    pub options: LimitOptions,
}

impl LimitSolver {
    pub fn new(
        params: PhysicsParams,
        magnetic: MagneticField,
        background: Density,
        options: LimitOptions,
    ) -> Result<Self> {
        params.validate()?;
        let grid = magnetic.grid;
        if background.grid != grid {
            return Err(Error::InvalidInput(
                "background grid differs from magnetic grid".into(),
            ));
        }
        let poisson = PoissonSolver::new(&grid, &params)?
            .with_neutrality_tol(RUN_NEUTRALITY_TOL)
            .with_neutrality_scale(sum::pairwise(&background.values));
        Ok(Self {
            params,
            grid,
            magnetic,
            background,
            poisson,
            options,
        })
    }

    pub fn drift(&self, e: &Field) -> Field {
        drift_velocity(e, &self.magnetic, self.params.sigma)
    }

    pub fn field(&self, n: &Density) -> Result<(Potential, Field)> {
        self.poisson.solve(&n.net_charge(&self.background))
    }

    /// Builds a state from `n` at time `t`. The net charge must be neutral
    /// to the input tolerance.
    pub fn state(&self, n: Density, t: f64) -> Result<LimitState> {
        if n.grid != self.grid {
            return Err(Error::InvalidInput(
                "density grid differs from solver grid".into(),
            ));
        }
        check_neutrality_scaled(
            &n.net_charge(&self.background),
            sum::pairwise(&self.background.values),
            NEUTRALITY_TOL,
        )?;
        self.rebuild(n, t)
    }

    fn rebuild(&self, n: Density, t: f64) -> Result<LimitState> {
        let n = Density {
            role: DensityRole::Limit,
            ..n
        };
        let (phi, e) = self.field(&n)?;
        let drift = self.drift(&e);
        let flux = flux(&n, &drift);
        Ok(LimitState {
            t,
            n,
            e,
            phi,
            drift,
            flux,
        })
    }

    /// Foot points of every node for the drift `u(x, s)`.
    pub fn feet(
        &self,
        u: &(impl Fn([f64; 2], f64) -> [f64; 2] + Sync),
        dt: f64,
    ) -> Result<Vec<[f64; 2]>> {
        let g = self.grid;
        let feet: Vec<[f64; 2]> = (0..g.len())
            .into_par_iter()
            .map(|k| trace_back(u, g.position(k), dt))
            .collect();
        let l = g.half_width();
        if let Some((k, x)) = feet
            .iter()
            .enumerate()
            .find(|(_, x)| x[0].abs() > l || x[1].abs() > l)
        {
            return Err(Error::SupportBreach(format!(
                "foot point ({:.4}, {:.4}) of node {k} lies outside the box",
                x[0], x[1]
            )));
        }
        Ok(feet)
    }

    /// `n'(x) = B(x) n(X) / B(X)` at the given feet.
    pub fn remap(&self, n: &Density, feet: &[[f64; 2]]) -> Density {
        let g = self.grid;
        let spline = PeriodicSpline2d::new(g.n(), g.axis().node(0), g.dx(), &n.values);
        let values: Vec<f64> = feet
            .par_iter()
            .enumerate()
            .map(|(k, x)| {
                let b_foot = self.magnetic.b_at(x[0], x[1]);
                self.magnetic.b[k] * spline.eval(x[0], x[1]) / b_foot
            })
            .collect();
        Density {
            grid: g,
            values,
            role: DensityRole::Limit,
        }
    }

    fn clip(&self, n: &mut Density) -> Result<f64> {
        let tol = self.options.clip_rel_tol * n.max().max(0.0);
        if let Some(v) = n.values.iter().cloned().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("limit density value {v}")));
        }
        if let Some(v) = n
            .values
            .iter()
            .cloned()
            .filter(|v| *v < -tol)
            .reduce(f64::min)
        {
            return Err(Error::Negativity { value: v, tol });
        }
        let clipped = sum::pairwise_map(n.values.len(), |k| (-n.values[k]).max(0.0));
        n.values.iter_mut().for_each(|v| *v = v.max(0.0));
        Ok(clipped * self.grid.cell_area())
    }

    /// Predictor-corrector step: trace with the frozen drift, solve for the
    /// predicted field, then retrace with the drift linear in time between
    /// the two levels.
    pub fn step(&self, state: &mut LimitState, dt: f64) -> Result<LimitStepReport> {
        if dt == 0.0 {
            return Ok(LimitStepReport::default());
        }
        let u_now = FieldSpline::new(&state.drift);
        let feet = self.feet(&|x, _| u_now.eval(x), dt)?;
        let mut predicted = self.remap(&state.n, &feet);
        self.clip(&mut predicted)?;
        let (_, e_pred) = self.field(&predicted)?;
        let u_pred = FieldSpline::new(&self.drift(&e_pred));
        let feet = self.feet(
            &|x, s| {
                let a = u_now.eval(x);
                let b = u_pred.eval(x);
                [(1.0 - s) * a[0] + s * b[0], (1.0 - s) * a[1] + s * b[1]]
            },
            dt,
        )?;
        let mut n = self.remap(&state.n, &feet);
        let clipped_mass = self.clip(&mut n)?;
        let t = state.t + dt;
        *state = self.rebuild(n, t)?;
        Ok(LimitStepReport { dt, clipped_mass })
    }

    /// Fixed-point iteration `E <- F(E)`, the field of `n^E - D`, starting
    /// from the field of the seed. Stops when the sup-norm update drops
    /// below `tol`.
    pub fn picard_field(
        &self,
        n_seed: &Density,
        mode: PicardMode,
        tol: f64,
        max_iter: usize,
    ) -> Result<PicardOutcome> {
        if !(tol > 0.0) {
            return Err(Error::InvalidInput(format!(
                "tolerance must be positive, got {tol}"
            )));
        }
        let (_, mut e) = self.field(n_seed)?;
        let mut residuals = Vec::new();
        for it in 1..=max_iter {
            let n_e = match mode {
                PicardMode::Frozen => n_seed.clone(),
                PicardMode::Step { dt } => {
                    let u = FieldSpline::new(&self.drift(&e));
                    let feet = self.feet(&|x, _| u.eval(x), dt)?;
                    self.remap(n_seed, &feet)
                }
            };
            let (_, next) = self.field(&n_e)?;
            let r = next.sup_distance(&e);
            residuals.push(r);
            e = next;
            if r < tol {
                return Ok(PicardOutcome {
                    e,
                    iterations: it,
                    residuals,
                });
            }
        }
        Err(Error::NonConvergence {
            iterations: max_iter,
            history: residuals,
        })
    }
}

pub fn flux(n: &Density, u: &Field) -> Field {
    let mut a = Field::zeros(n.grid);
    for k in 0..n.values.len() {
        a.x1[k] = n.values[k] * u.x1[k];
        a.x2[k] = n.values[k] * u.x2[k];
    }
    a
}

/// `sigma sum n ln n dx^2 + (eps0 / 2m) sum |E|^2 dx^2`.
pub fn limit_free_energy(n: &Density, e: &Field, params: &PhysicsParams) -> FreeEnergy {
    let entropy = params.sigma
        * sum::pairwise_map(n.values.len(), |k| {
            let v = n.values[k];
            if v > 0.0 {
                v * v.ln()
            } else {
                0.0
            }
        })
        * n.grid.cell_area();
    let potential = field_energy(e, params);
    FreeEnergy {
        kinetic: 0.0,
        potential,
        entropy,
        total: entropy + potential,
    }
}

/// Advances `state` through `schedule`, calling `observe(state, step, report)`
/// at step 0 and after every step.
pub fn run_limit(
    solver: &LimitSolver,
    state: &mut LimitState,
    schedule: &crate::kinetic::Schedule,
    mut observe: impl FnMut(&LimitState, usize, &LimitStepReport) -> Result<()>,
) -> Result<()> {
    observe(state, 0, &LimitStepReport::default())?;
    for step in 1..=schedule.steps {
        let report = solver
            .step(state, schedule.dt)
            .map_err(|e| e.at_step(step, state.t))?;
        state.t = schedule.time(step);
        observe(state, step, &report).map_err(|e| e.at_step(step, state.t))?;
    }
    Ok(())
}

/// Relative Jacobian defect `|B(X) det(dX/dx) - B(x)| / B(x)` of a flow map
/// at `x`, from centered differences with spacing `delta`.
pub fn volume_defect(
    flow: impl Fn([f64; 2]) -> [f64; 2],
    b: impl Fn([f64; 2]) -> f64,
    x: [f64; 2],
    delta: f64,
) -> f64 {
    let d = |i: usize| {
        let mut p = x;
        let mut m = x;
        p[i] += delta;
        m[i] -= delta;
        let (fp, fm) = (flow(p), flow(m));
        [
            (fp[0] - fm[0]) / (2.0 * delta),
            (fp[1] - fm[1]) / (2.0 * delta),
        ]
    };
    let (c1, c2) = (d(0), d(1));
    let det = c1[0] * c2[1] - c1[1] * c2[0];
    let foot = flow(x);
    (b(foot) * det - b(x)).abs() / b(x)
}
