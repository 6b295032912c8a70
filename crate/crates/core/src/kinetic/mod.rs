//! Strang-split integration of the scaled Vlasov-Poisson-Fokker-Planck system
//!
//! `eps df/dt + v.grad_x f + (q/m) E.grad_v f + (omega_c/eps) perp(v).grad_v f
//!   = (1/tau) div_v(sigma grad_v f + v f)`.

pub mod substeps;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

pub use substeps::{
    accel_step, clip_negative, collision_step, rotation_step, transport_step, CollisionCache,
    CollisionPropagator, Interpolation,
};

use crate::diagnostics;
use crate::error::{Error, Result};
use crate::fields::{
    maxwellian, maxwellian_value, Density, DensityRole, Distribution, Field, Maxwellian, Potential,
};
use crate::grid::{PhysicsParams, SpatialGrid, VelocityGrid};
use crate::magnetic::MagneticField;
use crate::poisson::{check_neutrality_scaled, PoissonSolver, NEUTRALITY_TOL, RUN_NEUTRALITY_TOL};
use crate::sum;

/// Fraction of the half width inside which the mass must stay.
pub const SUPPORT_FRACTION: f64 = 0.9;
/// Largest tolerated mass fraction outside the support window.
pub const SUPPORT_LEAK_TOL: f64 = 1e-6;

/// Velocity moments on the spatial grid.
#[derive(Debug, Clone)]
pub struct Moments {
    pub n: Density,
    /// `q sum v f dv^2`.
    pub j: Field,
    /// `sum (v v^T - sigma I) f dv^2` as `[S11, S12, S22]`.
    pub stress: [Vec<f64>; 3],
}

pub fn moments(f: &Distribution, params: &PhysicsParams) -> Moments {
    use rayon::prelude::*;
    let nv2 = f.velocity.len();
    let dv2 = f.velocity.cell_area();
    let vel: Vec<[f64; 2]> = (0..nv2).map(|j| f.velocity.velocity(j)).collect();
    let sigma = params.sigma;
    let per_node: Vec<[f64; 6]> = f
        .values
        .par_chunks(nv2)
        .map(|b| {
            let m0 = sum::pairwise(b);
            let m1 = sum::pairwise_map(nv2, |j| vel[j][0] * b[j]);
            let m2 = sum::pairwise_map(nv2, |j| vel[j][1] * b[j]);
            let s11 = sum::pairwise_map(nv2, |j| vel[j][0] * vel[j][0] * b[j]);
            let s12 = sum::pairwise_map(nv2, |j| vel[j][0] * vel[j][1] * b[j]);
            let s22 = sum::pairwise_map(nv2, |j| vel[j][1] * vel[j][1] * b[j]);
            [m0, m1, m2, s11, s12, s22]
        })
        .collect();
    let grid = f.spatial;
    let col = |c: usize| -> Vec<f64> { per_node.iter().map(|m| m[c] * dv2).collect() };
    let n_vals: Vec<f64> = col(0);
    let mut j = Field::zeros(grid);
    j.x1 = col(1).into_iter().map(|v| params.q * v).collect();
    j.x2 = col(2).into_iter().map(|v| params.q * v).collect();
    let s11: Vec<f64> = col(3)
        .iter()
        .zip(&n_vals)
        .map(|(s, n)| s - sigma * n)
        .collect();
    let s22: Vec<f64> = col(5)
        .iter()
        .zip(&n_vals)
        .map(|(s, n)| s - sigma * n)
        .collect();
    let stress = [s11, col(4), s22];
    Moments {
        n: Density {
            grid,
            values: n_vals,
            role: DensityRole::Plasma,
        },
        j,
        stress,
    }
}

/// Well-prepared data `f = n_in(x) M(v)`.
pub fn init_well_prepared(
    n_in: &Density,
    velocity: &VelocityGrid,
    sigma: f64,
) -> Result<Distribution> {
    init_shifted(n_in, velocity, sigma, [0.0, 0.0])
}

/// `f = n_in(x) M(v - u)`.
pub fn init_shifted(
    n_in: &Density,
    velocity: &VelocityGrid,
    sigma: f64,
    u: [f64; 2],
) -> Result<Distribution> {
    if n_in.values.iter().any(|v| *v < 0.0) {
        return Err(Error::InvalidInput("n_in must be non-negative".into()));
    }
    maxwellian(velocity, sigma)?;
    let m = velocity.sample(|a, b| maxwellian_value(a - u[0], b - u[1], sigma));
    let nv2 = velocity.len();
    let mut values = vec![0.0; n_in.values.len() * nv2];
    for (block, n) in values.chunks_exact_mut(nv2).zip(&n_in.values) {
        for (x, mv) in block.iter_mut().zip(&m) {
            *x = n * mv;
        }
    }
    Distribution::new(n_in.grid, *velocity, values)
}

/// Kinetic state with moments and self-consistent field kept in sync with `f`.
#[derive(Debug, Clone)]
pub struct KineticState {
    pub t: f64,
    pub f: Distribution,
    pub n: Density,
    pub j: Field,
    pub stress: [Vec<f64>; 3],
    pub e: Field,
    pub phi: Potential,
    /// Dissipation functional of `f`.
    pub dissipation: f64,
}

/// Step controls of the split scheme for a fixed `dt`.
#[derive(Debug, Clone)]
pub struct SplitStepPlan {
    pub dt: f64,
    /// Collision time of one half step, `dt / (2 eps tau)`.
    pub mu_half: f64,
    /// Rotation angle of one half step at each node, `omega_c dt / (2 eps^2)`.
    pub half_angles: Vec<f64>,
    pub max_half_angle: f64,
    /// `dt / eps`.
    pub transport: f64,
    /// `(q/m) dt / (2 eps)`.
    pub accel_half: f64,
}

/// Per-half-step rotation bound.
pub const MAX_HALF_ANGLE: f64 = PI / 4.0;

/// `min(dt_max, (pi/2) eps^2 / max omega_c, eps tau / 4)`.
pub fn stable_dt(params: &PhysicsParams, magnetic: &MagneticField, dt_max: f64) -> f64 {
    let eps = params.eps;
    dt_max
        .min(0.5 * PI * eps * eps / magnetic.omega_max)
        .min(0.25 * eps * params.tau)
}

impl SplitStepPlan {
    pub fn new(dt: f64, params: &PhysicsParams, magnetic: &MagneticField) -> Result<Self> {
        if !(dt.is_finite() && dt >= 0.0) {
            return Err(Error::InvalidParams(format!(
                "time step must be finite and >= 0, got {dt}"
            )));
        }
        let eps = params.eps;
        let coef = 0.5 * dt / (eps * eps);
        let half_angles: Vec<f64> = magnetic.omega_c.iter().map(|w| w * coef).collect();
        let max_half_angle = half_angles.iter().fold(0.0f64, |m, a| m.max(a.abs()));
        if max_half_angle > MAX_HALF_ANGLE * (1.0 + 1e-12) {
            return Err(Error::RotationBound {
                angle: max_half_angle,
            });
        }
        Ok(Self {
            dt,
            mu_half: 0.5 * dt / (eps * params.tau),
            half_angles,
            max_half_angle,
            transport: dt / eps,
            accel_half: 0.5 * params.charge_to_mass() * dt / eps,
        })
    }
}

/// Numerical options of the kinetic solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KineticOptions {
    #[serde(default)]
    pub interpolation: Interpolation,
    /// Negative values above `-clip_rel_tol * max f` are zeroed.
    #[serde(default = "default_clip")]
    pub clip_rel_tol: f64,
}

fn default_clip() -> f64 {
    DEFAULT_CLIP_REL_TOL
}

pub const DEFAULT_CLIP_REL_TOL: f64 = 1e-8;

impl Default for KineticOptions {
    fn default() -> Self {
        Self {
            interpolation: Interpolation::Spectral,
            clip_rel_tol: DEFAULT_CLIP_REL_TOL,
        }
    }
}

/// Per-step side results.
#[derive(Debug, Clone, Copy, Default)]
pub struct StepReport {
    pub dt: f64,
    pub clipped_mass: f64,
    /// Dissipation averaged over the step: trapezoid rule on each collision
    /// half step, the only substeps that change the free energy.
    pub step_dissipation: f64,
}

pub struct KineticSolver {
    pub params: PhysicsParams,
    pub spatial: SpatialGrid,
    pub velocity: VelocityGrid,
    pub magnetic: MagneticField,
    pub background: Density,
    pub poisson: PoissonSolver,
    pub maxwellian: Maxwellian,
    pub options: KineticOptions,
    collisions: CollisionCache,
}

impl KineticSolver {
    pub fn new(
        params: PhysicsParams,
        velocity: VelocityGrid,
        magnetic: MagneticField,
        background: Density,
        options: KineticOptions,
    ) -> Result<Self> {
        params.validate()?;
        let spatial = magnetic.grid;
        if background.grid != spatial {
            return Err(Error::InvalidInput(
                "background grid differs from magnetic grid".into(),
            ));
        }
        let poisson = PoissonSolver::new(&spatial, &params)?
            .with_neutrality_tol(RUN_NEUTRALITY_TOL)
            .with_neutrality_scale(sum::pairwise(&background.values));
        let maxwellian = maxwellian(&velocity, params.sigma)?;
        Ok(Self {
            params,
            spatial,
            velocity,
            magnetic,
            background,
            poisson,
            maxwellian,
            options,
            collisions: CollisionCache::default(),
        })
    }

    /// Builds a state from `f` at time `t`, solving for the field. The net
    /// charge must be neutral to the input tolerance.
    pub fn state(&self, f: Distribution, t: f64) -> Result<KineticState> {
        if f.spatial != self.spatial || f.velocity != self.velocity {
            return Err(Error::InvalidInput(
                "distribution grids differ from solver grids".into(),
            ));
        }
        f.check_finite()?;
        let m = moments(&f, &self.params);
        check_neutrality_scaled(
            &m.n.net_charge(&self.background),
            sum::pairwise(&self.background.values),
            NEUTRALITY_TOL,
        )?;
        let (phi, e) = self.poisson.solve(&m.n.net_charge(&self.background))?;
        let dissipation = diagnostics::dissipation(&f, &self.params);
        Ok(KineticState {
            t,
            f,
            n: m.n,
            j: m.j,
            stress: m.stress,
            e,
            phi,
            dissipation,
        })
    }

    fn refresh(&self, state: &mut KineticState) -> Result<()> {
        let m = moments(&state.f, &self.params);
        let (phi, e) = self.poisson.solve(&m.n.net_charge(&self.background))?;
        state.n = m.n;
        state.j = m.j;
        state.stress = m.stress;
        state.e = e;
        state.phi = phi;
        state.dissipation = diagnostics::dissipation(&state.f, &self.params);
        Ok(())
    }

    pub fn plan(&self, dt: f64) -> Result<SplitStepPlan> {
        SplitStepPlan::new(dt, &self.params, &self.magnetic)
    }

    /// One Strang step with the field frozen at its start-of-step value.
    pub fn step(&mut self, state: &mut KineticState, plan: &SplitStepPlan) -> Result<StepReport> {
        if plan.dt == 0.0 {
            return Ok(StepReport::default());
        }
        let interp = self.options.interpolation;
        let f = &mut state.f;
        let collision = self
            .collisions
            .get(&self.velocity, plan.mu_half, self.params.sigma);

        let d_start = state.dissipation;
        collision_step(f, collision);
        let d_first = diagnostics::dissipation(f, &self.params);
        rotation_step(f, &plan.half_angles, interp);
        accel_step(f, &state.e, plan.accel_half, interp)?;
        transport_step(f, plan.transport, interp)?;
        accel_step(f, &state.e, plan.accel_half, interp)?;
        rotation_step(f, &plan.half_angles, interp);
        let d_second = diagnostics::dissipation(f, &self.params);
        collision_step(f, collision);

        f.check_finite()?;
        let tol = self.options.clip_rel_tol * f.max().max(0.0);
        let clipped_mass = clip_negative(f, tol)?;
        state.t += plan.dt;
        self.refresh(state)?;
        check_support(&state.n)?;
        Ok(StepReport {
            dt: plan.dt,
            clipped_mass,
            step_dissipation: 0.25 * (d_start + d_first + d_second + state.dissipation),
        })
    }
}

/// Mass inside `|x|_inf <= 0.9 L` must be at least `(1 - 1e-6)` of the total.
pub fn check_support(n: &Density) -> Result<()> {
    let g = n.grid;
    let limit = SUPPORT_FRACTION * g.half_width();
    let total = sum::pairwise(&n.values);
    let inside = sum::pairwise_map(n.values.len(), |k| {
        let [a, b] = g.position(k);
        if a.abs() <= limit && b.abs() <= limit {
            n.values[k]
        } else {
            0.0
        }
    });
    if total > 0.0 && inside < (1.0 - SUPPORT_LEAK_TOL) * total {
        return Err(Error::SupportBreach(format!(
            "only {:.9} of the mass lies within |x| <= {limit}",
            inside / total
        )));
    }
    Ok(())
}

/// Uniform time grid hitting every snapshot time exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub dt: f64,
    pub steps: usize,
    /// Step indices (after which) snapshots are taken; includes 0.
    pub snapshot_steps: Vec<usize>,
}

impl Schedule {
    /// `intervals` equal snapshot intervals over `[0, final_time]`, each
    /// split into the fewest steps no longer than `dt_bound`.
    pub fn new(final_time: f64, dt_bound: f64, intervals: usize) -> Result<Self> {
        if final_time == 0.0 {
            return Ok(Self {
                dt: 0.0,
                steps: 0,
                snapshot_steps: vec![0],
            });
        }
        if !(dt_bound > 0.0 && dt_bound.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "step bound must be positive, got {dt_bound}"
            )));
        }
        let intervals = intervals.max(1);
        let interval = final_time / intervals as f64;
        let per = ((interval / dt_bound) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        let dt = interval / per as f64;
        Ok(Self {
            dt,
            steps: per * intervals,
            snapshot_steps: (0..=intervals).map(|i| i * per).collect(),
        })
    }

    pub fn time(&self, step: usize) -> f64 {
        step as f64 * self.dt
    }

    pub fn is_snapshot(&self, step: usize) -> bool {
        self.snapshot_steps.binary_search(&step).is_ok()
    }
}

/// Advances `state` through `schedule`, calling `observe(state, step, report)`
/// at step 0 and after every step.
pub fn run_kinetic(
    solver: &mut KineticSolver,
    state: &mut KineticState,
    schedule: &Schedule,
    mut observe: impl FnMut(&KineticState, usize, &StepReport) -> Result<()>,
) -> Result<()> {
    observe(state, 0, &StepReport::default())?;
    if schedule.steps == 0 {
        return Ok(());
    }
    let plan = solver
        .plan(schedule.dt)
        .map_err(|e| e.at_step(1, state.t))?;
    for step in 1..=schedule.steps {
        let report = solver
            .step(state, &plan)
            .map_err(|e| e.at_step(step, state.t))?;
        state.t = schedule.time(step);
        observe(state, step, &report).map_err(|e| e.at_step(step, state.t))?;
    }
    Ok(())
}
