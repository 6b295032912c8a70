use std::fs::{self, OpenOptions};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{Mode, RunConfig};
use super::fieldio::{dump_field, load_field, FieldFile};
use crate::diagnostics::{
    csiszar_kullback, free_energy_kinetic, kinetic_vs_limit_l1, modulated_energy, moment_residuals,
    relative_entropy_velocity, DiagnosticsRecord, MomentSnapshot, CSV_HEADER,
};
use crate::error::{Error, Result};
use crate::fields::{
    maxwellian, neutral_background, Density, DensityRole, Distribution, Field, Maxwellian,
};
use crate::grid::{PhysicsParams, SpatialGrid, VelocityGrid};
use crate::guiding_center::{limit_free_energy, run_limit, LimitSolver};
use crate::kinetic::{init_well_prepared, run_kinetic, stable_dt, KineticSolver, Schedule};
use crate::magnetic::{eval_magnetic, MagneticField};
use crate::spline::PeriodicSpline2d;

/// Snapshot times of two trajectories match if they differ by at most this
/// much relative to `max(1, T)`.
pub const TIME_MATCH_TOL: f64 = 1e-9;

/// Progress notes on stderr unless quiet.
#[derive(Debug, Clone, Copy, Default)]
pub struct Reporter {
    pub quiet: bool,
}

impl Reporter {
    pub fn note(&self, message: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", message.as_ref());
        }
    }
}

/// Everything a run derives from its config for one value of `eps`.
pub struct Scenario {
    pub params: PhysicsParams,
    pub spatial: SpatialGrid,
    pub velocity: VelocityGrid,
    pub magnetic: MagneticField,
    pub n_in: Density,
    pub background: Density,
    pub maxwellian: Maxwellian,
}

impl Scenario {
    pub fn build(config: &RunConfig, eps: f64) -> Result<Self> {
        let params = config.physics.with_eps(eps);
        params.validate()?;
        let (spatial, velocity) = config.grids()?;
        let magnetic = eval_magnetic(&config.magnetic, &spatial, &params)?;
        let n_in = config.initial_density(&spatial)?;
        let background = neutral_background(&n_in, config.background_width)?;
        let maxwellian = maxwellian(&velocity, params.sigma)?;
        Ok(Self {
            params,
            spatial,
            velocity,
            magnetic,
            n_in,
            background,
            maxwellian,
        })
    }

    pub fn kinetic_schedule(&self, config: &RunConfig) -> Result<Schedule> {
        let bound = if config.enforce_stability {
            stable_dt(&self.params, &self.magnetic, config.dt_max)
        } else {
            config.dt_max
        };
        Schedule::new(self.params.final_time, bound, config.snapshot_intervals)
    }

    pub fn limit_schedule(&self, config: &RunConfig) -> Result<Schedule> {
        Schedule::new(
            self.params.final_time,
            config.limit_dt_max,
            config.snapshot_intervals,
        )
    }
}

/// A density and its field at one time.
#[derive(Debug, Clone)]
pub struct DensitySnapshot {
    pub t: f64,
    pub n: Density,
    pub e: Field,
}

#[derive(Debug, Clone)]
pub struct LimitRun {
    pub snapshots: Vec<DensitySnapshot>,
    pub records: Vec<DiagnosticsRecord>,
}

/// One row of a kinetic-vs-limit comparison.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ComparisonRow {
    pub t: f64,
    /// `||f - n M||_1` over phase space, or `||n_a - n_b||_1 sum M dv^2`
    /// when no distribution is available.
    pub l1_phase: f64,
    pub l1_density: f64,
    /// `||E_a - E_b||_2`.
    pub field_l2: f64,
    pub modulated_energy: f64,
    pub ck_bound: f64,
}

pub const COMPARISON_HEADER: &str = "t,l1_phase,l1_density,field_l2,modulated_energy,ck_bound";

impl ComparisonRow {
    pub fn csv_row(&self) -> String {
        [
            self.t,
            self.l1_phase,
            self.l1_density,
            self.field_l2,
            self.modulated_energy,
            self.ck_bound,
        ]
        .iter()
        .map(|v| format!("{v:e}"))
        .collect::<Vec<_>>()
        .join(",")
    }
}

#[derive(Debug, Clone)]
pub struct KineticRun {
    pub records: Vec<DiagnosticsRecord>,
    pub comparison: Vec<ComparisonRow>,
    pub snapshots: Vec<DensitySnapshot>,
    pub sup_modulated_energy: f64,
    /// `(1/eps) int_0^T D dt`.
    pub scaled_dissipation: f64,
    /// `||F^eps||_1` at the final time (centered over the last two steps).
    pub flux_l1: Option<f64>,
    pub steps: usize,
    pub dt: f64,
}

fn limit_record(
    snap: &DensitySnapshot,
    params: &PhysicsParams,
    mass0: f64,
    clipped: f64,
) -> DiagnosticsRecord {
    let fe = limit_free_energy(&snap.n, &snap.e, params);
    let mass = snap.n.mass();
    DiagnosticsRecord {
        t: snap.t,
        mass,
        kinetic_energy: 0.0,
        potential_energy: fe.potential,
        entropy: fe.entropy,
        free_energy: fe.total,
        clipped_mass: clipped,
        mass_drift: (mass - mass0) / mass0,
        ..DiagnosticsRecord::default()
    }
}

/// Runs the guiding-center limit from `n_in`, keeping every snapshot.
pub fn run_limit_scenario(
    scenario: &Scenario,
    config: &RunConfig,
    reporter: Reporter,
) -> Result<LimitRun> {
    let solver = LimitSolver::new(
        scenario.params,
        scenario.magnetic.clone(),
        scenario.background.clone(),
        config.limit,
    )?;
    let schedule = scenario.limit_schedule(config)?;
    let mut state = solver.state(scenario.n_in.clone(), 0.0)?;
    let mass0 = state.n.mass();
    let mut clipped = 0.0;
    let mut out = LimitRun {
        snapshots: Vec::new(),
        records: Vec::new(),
    };
    run_limit(&solver, &mut state, &schedule, |s, step, report| {
        clipped += report.clipped_mass;
        if schedule.is_snapshot(step) {
            let snap = DensitySnapshot {
                t: s.t,
                n: s.n.clone(),
                e: s.e.clone(),
            };
            let record = limit_record(&snap, &scenario.params, mass0, clipped);
            record.validate()?;
            out.records.push(record);
            out.snapshots.push(snap);
            reporter.note(format!("limit t={:.4} step {step}/{}", s.t, schedule.steps));
        }
        Ok(())
    })?;
    Ok(out)
}

fn check_times(a: f64, b: f64, index: usize, horizon: f64) -> Result<()> {
    if (a - b).abs() > TIME_MATCH_TOL * horizon.max(1.0) {
        return Err(Error::TimeMismatch {
            index,
            left: a,
            right: b,
        });
    }
    Ok(())
}

/// Runs the kinetic model for `scenario.params.eps` and evaluates every
/// diagnostic against the matched snapshots of `limit`. Snapshot files are
/// written under `snapshot_dir` when given.
pub fn run_kinetic_scenario(
    scenario: &Scenario,
    config: &RunConfig,
    limit: &LimitRun,
    snapshot_dir: Option<&Path>,
    reporter: Reporter,
) -> Result<KineticRun> {
    let params = scenario.params;
    let mut solver = KineticSolver::new(
        params,
        scenario.velocity,
        scenario.magnetic.clone(),
        scenario.background.clone(),
        config.kinetic,
    )?;
    let schedule = scenario.kinetic_schedule(config)?;
    if schedule.snapshot_steps.len() != limit.snapshots.len() {
        return Err(Error::TimeMismatch {
            index: schedule.snapshot_steps.len().min(limit.snapshots.len()),
            left: params.final_time,
            right: limit.snapshots.last().map_or(0.0, |s| s.t),
        });
    }
    let f0 = init_well_prepared(&scenario.n_in, &scenario.velocity, params.sigma)?;
    let mut state = solver.state(f0, 0.0)?;
    let mass0 = state.f.mass();
    let m = &scenario.maxwellian;

    let mut writer = match snapshot_dir {
        Some(dir) => Some(SnapshotWriter::new(
            dir,
            TrajectoryKind::Kinetic,
            config,
            config.write_distribution,
        )?),
        None => None,
    };
    let mut run = KineticRun {
        records: Vec::new(),
        comparison: Vec::new(),
        snapshots: Vec::new(),
        sup_modulated_energy: 0.0,
        scaled_dissipation: 0.0,
        flux_l1: None,
        steps: schedule.steps,
        dt: schedule.dt,
    };
    let mut clipped = 0.0;
    let mut dissipated = 0.0;
    let mut window: Vec<MomentSnapshot> = Vec::with_capacity(3);
    let mut index = 0;
    let started = Instant::now();

    run_kinetic(&mut solver, &mut state, &schedule, |s, step, report| {
        clipped += report.clipped_mass;
        dissipated += report.step_dissipation * report.dt;
        if window.len() == 3 {
            window.remove(0);
        }
        window.push(MomentSnapshot {
            t: s.t,
            n: s.n.clone(),
            j: s.j.clone(),
            stress: s.stress.clone(),
            e: s.e.clone(),
        });
        if !schedule.is_snapshot(step) {
            return Ok(());
        }
        let lim = &limit.snapshots[index];
        check_times(s.t, lim.t, index, params.final_time)?;
        let fe = free_energy_kinetic(&s.f, &s.e, &params);
        let rel_v = relative_entropy_velocity(&s.f, &s.n, m)?;
        let me = modulated_energy(&s.n, &s.e, &lim.n, &lim.e, &params);
        let audit = kinetic_vs_limit_l1(&s.f, &s.n, &lim.n, m, rel_v)?;
        let mass = s.f.mass();
        let record = DiagnosticsRecord {
            t: s.t,
            mass,
            kinetic_energy: fe.kinetic,
            potential_energy: fe.potential,
            entropy: fe.entropy,
            free_energy: fe.total,
            dissipation: s.dissipation,
            relative_entropy_velocity: rel_v,
            modulated_energy: me.total,
            l1_kinetic_vs_limit: audit.l1,
            ck_bound: audit.bound,
            clipped_mass: clipped,
            mass_drift: (mass - mass0) / mass0,
        };
        record.validate()?;
        let dens = csiszar_kullback(&s.n.values, &lim.n.values, s.n.grid.cell_area())?;
        run.comparison.push(ComparisonRow {
            t: s.t,
            l1_phase: audit.l1,
            l1_density: dens.l1,
            field_l2: s.e.squared_l2_distance(&lim.e).sqrt(),
            modulated_energy: me.total,
            ck_bound: audit.bound,
        });
        run.sup_modulated_energy = run.sup_modulated_energy.max(me.total);
        run.records.push(record);
        let snap = DensitySnapshot {
            t: s.t,
            n: s.n.clone(),
            e: s.e.clone(),
        };
        if let Some(w) = writer.as_mut() {
            w.write(&snap, Some(&s.f))?;
        }
        run.snapshots.push(snap);
        index += 1;
        reporter.note(format!(
            "kinetic eps={} t={:.4} step {step}/{} modulated={:.3e} ({:.1}s)",
            params.eps,
            s.t,
            schedule.steps,
            me.total,
            started.elapsed().as_secs_f64()
        ));
        Ok(())
    })?;
    if let Some(w) = writer {
        w.finish()?;
    }
    run.scaled_dissipation = dissipated / params.eps;
    if window.len() == 3 {
        run.flux_l1 = Some(moment_residuals(&window, &params, &scenario.magnetic)?.flux_l1);
    }
    Ok(run)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryKind {
    Kinetic,
    Limit,
}

/// Contents of `snapshots/index.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryIndex {
    pub kind: TrajectoryKind,
    pub half_width: f64,
    pub nx: usize,
    pub v_max: f64,
    pub nv: usize,
    pub params: PhysicsParams,
    pub times: Vec<f64>,
    pub has_distribution: bool,
}

fn snapshot_name(prefix: &str, index: usize) -> String {
    format!("{prefix}_{index:04}.fld")
}

struct SnapshotWriter {
    dir: PathBuf,
    index: TrajectoryIndex,
}

impl SnapshotWriter {
    fn new(dir: &Path, kind: TrajectoryKind, config: &RunConfig, with_f: bool) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            index: TrajectoryIndex {
                kind,
                half_width: config.grid.half_width,
                nx: config.grid.nx,
                v_max: config.grid.v_max,
                nv: config.grid.nv,
                params: config.physics,
                times: Vec::new(),
                has_distribution: with_f && kind == TrajectoryKind::Kinetic,
            },
        })
    }

    fn write(&mut self, snap: &DensitySnapshot, f: Option<&Distribution>) -> Result<()> {
        let k = self.index.times.len();
        dump_field(
            &FieldFile::from(&snap.n),
            &self.dir.join(snapshot_name("n", k)),
        )?;
        dump_field(
            &FieldFile::from(&snap.e),
            &self.dir.join(snapshot_name("e", k)),
        )?;
        if self.index.has_distribution {
            if let Some(f) = f {
                dump_field(&FieldFile::from(f), &self.dir.join(snapshot_name("f", k)))?;
            }
        }
        self.index.times.push(snap.t);
        Ok(())
    }

    fn finish(self) -> Result<()> {
        let path = self.dir.join("index.json");
        let text = serde_json::to_string_pretty(&self.index).expect("index serializes");
        fs::write(&path, text).map_err(|e| Error::io(path.display().to_string(), e))
    }
}

fn write_limit_snapshots(dir: &Path, config: &RunConfig, run: &LimitRun) -> Result<()> {
    let mut w = SnapshotWriter::new(dir, TrajectoryKind::Limit, config, false)?;
    for snap in &run.snapshots {
        w.write(snap, None)?;
    }
    w.finish()
}

/// A trajectory stored on disk by `run`.
pub struct StoredTrajectory {
    pub dir: PathBuf,
    pub index: TrajectoryIndex,
    pub spatial: SpatialGrid,
    pub velocity: VelocityGrid,
}

impl StoredTrajectory {
    /// Opens `path`, which is either a snapshot directory or a run output
    /// directory containing `snapshots/`.
    pub fn open(path: &Path) -> Result<Self> {
        let dir = if path.join("index.json").exists() {
            path.to_path_buf()
        } else {
            path.join("snapshots")
        };
        let file = dir.join("index.json");
        let text =
            fs::read_to_string(&file).map_err(|e| Error::io(file.display().to_string(), e))?;
        let index: TrajectoryIndex = serde_json::from_str(&text).map_err(|e| Error::Config {
            path: file.display().to_string(),
            message: e.to_string(),
        })?;
        let spatial = SpatialGrid::new(index.half_width, index.nx)?;
        let velocity = VelocityGrid::new(index.v_max, index.nv)?;
        Ok(Self {
            dir,
            index,
            spatial,
            velocity,
        })
    }

    pub fn len(&self) -> usize {
        self.index.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.times.is_empty()
    }

    pub fn snapshot(&self, k: usize) -> Result<DensitySnapshot> {
        let n = load_field(&self.dir.join(snapshot_name("n", k)))?
            .into_density(self.spatial, DensityRole::Plasma)?;
        let e = load_field(&self.dir.join(snapshot_name("e", k)))?.into_field(self.spatial)?;
        Ok(DensitySnapshot {
            t: self.index.times[k],
            n,
            e,
        })
    }

    pub fn distribution(&self, k: usize) -> Result<Option<Distribution>> {
        if !self.index.has_distribution {
            return Ok(None);
        }
        load_field(&self.dir.join(snapshot_name("f", k)))?
            .into_distribution(self.spatial, self.velocity)
            .map(Some)
    }
}

/// Cubic-spline resampling of a density and field onto `grid`.
pub fn resample(snap: &DensitySnapshot, grid: SpatialGrid) -> DensitySnapshot {
    if snap.n.grid == grid {
        return snap.clone();
    }
    let src = snap.n.grid;
    let origin = src.position(0)[0];
    let interp = |values: &[f64]| {
        let s = PeriodicSpline2d::new(src.n(), origin, src.dx(), values);
        (0..grid.len())
            .map(|k| {
                let [a, b] = grid.position(k);
                s.eval(a, b)
            })
            .collect::<Vec<f64>>()
    };
    let n_values = interp(&snap.n.values)
        .into_iter()
        .map(|v| v.max(0.0))
        .collect();
    DensitySnapshot {
        t: snap.t,
        n: Density {
            grid,
            values: n_values,
            role: snap.n.role,
        },
        e: Field {
            grid,
            x1: interp(&snap.e.x1),
            x2: interp(&snap.e.x2),
        },
    }
}

/// Distances between two trajectories at matched times; `b` is resampled
/// onto the grid of `a` when they differ. The CK inequality is asserted on
/// every row.
pub fn compare_trajectories(
    a: &StoredTrajectory,
    b: &StoredTrajectory,
) -> Result<Vec<ComparisonRow>> {
    if a.len() != b.len() {
        return Err(Error::TimeMismatch {
            index: a.len().min(b.len()),
            left: a.index.times.last().copied().unwrap_or(0.0),
            right: b.index.times.last().copied().unwrap_or(0.0),
        });
    }
    let params = a.index.params;
    let horizon = a.index.times.last().copied().unwrap_or(0.0);
    let m = maxwellian(&a.velocity, params.sigma)?;
    let mut rows = Vec::with_capacity(a.len());
    for k in 0..a.len() {
        check_times(a.index.times[k], b.index.times[k], k, horizon)?;
        let sa = a.snapshot(k)?;
        let sb = resample(&b.snapshot(k)?, a.spatial);
        rows.push(compare_snapshots(
            &sa,
            &sb,
            a.distribution(k)?.as_ref(),
            &m,
            &params,
        )?);
    }
    Ok(rows)
}

pub fn compare_snapshots(
    a: &DensitySnapshot,
    b: &DensitySnapshot,
    f: Option<&Distribution>,
    m: &Maxwellian,
    params: &PhysicsParams,
) -> Result<ComparisonRow> {
    let dens = csiszar_kullback(&a.n.values, &b.n.values, a.n.grid.cell_area())?;
    let me = modulated_energy(&a.n, &a.e, &b.n, &b.e, params);
    let (l1_phase, ck_bound) = match f {
        Some(f) => {
            let rel_v = relative_entropy_velocity(f, &a.n, m)?;
            let audit = kinetic_vs_limit_l1(f, &a.n, &b.n, m, rel_v)?;
            if !audit.holds() {
                return Err(Error::InvalidInput(format!(
                    "CK inequality violated at t = {}: {} > {}",
                    a.t, audit.l1, audit.bound
                )));
            }
            (audit.l1, audit.bound)
        }
        None => {
            if !dens.holds() {
                return Err(Error::InvalidInput(format!(
                    "CK inequality violated at t = {}: {} > {}",
                    a.t, dens.l1, dens.bound
                )));
            }
            (dens.l1 * m.integral, dens.bound * m.integral)
        }
    };
    Ok(ComparisonRow {
        t: a.t,
        l1_phase,
        l1_density: dens.l1,
        field_l2: a.e.squared_l2_distance(&b.e).sqrt(),
        modulated_energy: me.total,
        ck_bound,
    })
}

/// One row of an eps-sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub eps: f64,
    /// `None` when the member run succeeded, otherwise its error.
    pub error: Option<String>,
    pub final_modulated_energy: f64,
    pub sup_modulated_energy: f64,
    pub final_rel_entropy_v: f64,
    pub scaled_dissipation: f64,
    pub l1_dist: f64,
    pub ck_bound: f64,
    pub flux_l1: f64,
    pub runtime_s: f64,
}

impl SweepRow {
    pub fn ok(&self) -> bool {
        self.error.is_none()
    }
}

pub const SWEEP_HEADER: &str = "eps,status,final_modulated_energy,sup_modulated_energy,final_rel_entropy_v,scaled_dissipation,l1_dist,ck_bound,flux_l1,runtime_s";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    /// Verdicts need at least two rows; a failed row makes them false.
    pub modulated_decreasing: Option<bool>,
    pub dissipation_decreasing: Option<bool>,
    pub flux_decreasing: Option<bool>,
    /// Least-squares slope of `ln sup modulated energy` against `ln eps`.
    pub slope: Option<f64>,
}

fn strictly_decreasing(rows: &[SweepRow], key: impl Fn(&SweepRow) -> f64) -> Option<bool> {
    if rows.len() < 2 {
        return None;
    }
    Some(rows.iter().all(SweepRow::ok) && rows.windows(2).all(|w| key(&w[1]) < key(&w[0])))
}

/// Least-squares slope of `y` against `x`.
pub fn fitted_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() < 2 || x.len() != y.len() {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

impl SweepReport {
    pub fn from_rows(rows: Vec<SweepRow>) -> Self {
        let fit: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| r.ok() && r.sup_modulated_energy > 0.0)
            .map(|r| (r.eps.ln(), r.sup_modulated_energy.ln()))
            .collect();
        let (x, y): (Vec<f64>, Vec<f64>) = fit.into_iter().unzip();
        Self {
            modulated_decreasing: strictly_decreasing(&rows, |r| r.sup_modulated_energy),
            dissipation_decreasing: strictly_decreasing(&rows, |r| r.scaled_dissipation),
            flux_decreasing: strictly_decreasing(&rows, |r| r.flux_l1),
            slope: if rows.len() < 2 {
                None
            } else {
                fitted_slope(&x, &y)
            },
            rows,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(SWEEP_HEADER);
        out.push('\n');
        for r in &self.rows {
            let status = if r.ok() { "ok" } else { "failed" };
            let values = [
                r.final_modulated_energy,
                r.sup_modulated_energy,
                r.final_rel_entropy_v,
                r.scaled_dissipation,
                r.l1_dist,
                r.ck_bound,
                r.flux_l1,
                r.runtime_s,
            ];
            out.push_str(&format!("{:e},{status}", r.eps));
            for v in values {
                out.push_str(&format!(",{v:e}"));
            }
            out.push('\n');
        }
        out
    }
}

fn sweep_member(
    config: &RunConfig,
    eps: f64,
    limit: &LimitRun,
    out: Option<&Path>,
    reporter: Reporter,
) -> Result<(KineticRun, f64)> {
    let started = Instant::now();
    let scenario = Scenario::build(config, eps)?;
    let run = run_kinetic_scenario(&scenario, config, limit, None, reporter)?;
    if let Some(dir) = out {
        write_text(
            &dir.join(format!("diagnostics_eps_{eps}.csv")),
            &diagnostics_csv(&run.records),
        )?;
    }
    Ok((run, started.elapsed().as_secs_f64()))
}

/// Runs the limit once and the kinetic model for every `eps` in the list.
/// A failing member marks its row failed and the sweep continues.
pub fn sweep(config: &RunConfig, out: Option<&Path>, reporter: Reporter) -> Result<SweepReport> {
    let first = *config.eps_list.first().ok_or_else(|| Error::Config {
        path: String::new(),
        message: "eps_list: sweep needs at least one eps".into(),
    })?;
    let limit_scenario = Scenario::build(config, first)?;
    let limit = run_limit_scenario(&limit_scenario, config, reporter)?;
    let mut rows = Vec::new();
    for &eps in &config.eps_list {
        reporter.note(format!("sweep member eps={eps}"));
        let row = match sweep_member(config, eps, &limit, out, reporter) {
            Ok((run, runtime_s)) => {
                let last = run.records.last().copied().unwrap_or_default();
                match run.flux_l1 {
                    Some(flux_l1) => SweepRow {
                        eps,
                        error: None,
                        final_modulated_energy: last.modulated_energy,
                        sup_modulated_energy: run.sup_modulated_energy,
                        final_rel_entropy_v: last.relative_entropy_velocity,
                        scaled_dissipation: run.scaled_dissipation,
                        l1_dist: last.l1_kinetic_vs_limit,
                        ck_bound: last.ck_bound,
                        flux_l1,
                        runtime_s,
                    },
                    None => failed_row(eps, "fewer than two steps; flux remainder undefined"),
                }
            }
            Err(e) => {
                reporter.note(format!("sweep member eps={eps} failed: {e}"));
                failed_row(eps, &e.to_string())
            }
        };
        rows.push(row);
    }
    let report = SweepReport::from_rows(rows);
    if let Some(dir) = out {
        write_text(&dir.join("sweep.csv"), &report.to_csv())?;
        let json = serde_json::to_string_pretty(&report).expect("report serializes");
        write_text(&dir.join("sweep.json"), &json)?;
    }
    Ok(report)
}

fn failed_row(eps: f64, message: &str) -> SweepRow {
    SweepRow {
        eps,
        error: Some(message.to_string()),
        final_modulated_energy: 0.0,
        sup_modulated_energy: 0.0,
        final_rel_entropy_v: 0.0,
        scaled_dissipation: 0.0,
        l1_dist: 0.0,
        ck_bound: 0.0,
        flux_l1: 0.0,
        runtime_s: 0.0,
    }
}

pub fn diagnostics_csv(records: &[DiagnosticsRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let mut out = String::from(COMPARISON_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Exclusive hold on an output directory, released on drop.
pub struct OutputLock {
    path: PathBuf,
}

pub const LOCK_FILE: &str = ".gyrodrift.lock";

impl OutputLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(Self { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(Error::Locked(dir.to_path_buf()))
            }
            Err(e) => Err(Error::io(path.display().to_string(), e)),
        }
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// What a finished run produced.
#[derive(Debug, Clone)]
pub enum RunOutcome {
    Kinetic(KineticRun),
    Limit(LimitRun),
    Compare {
        kinetic: KineticRun,
        limit: LimitRun,
    },
    Sweep(SweepReport),
}

/// Runs `config` in its mode, writing all artifacts under `out`.
pub fn run(config: &RunConfig, out: &Path, reporter: Reporter) -> Result<RunOutcome> {
    config.validate()?;
    let _lock = OutputLock::acquire(out)?;
    let mut resolved = config.clone();
    resolved.output_dir = Some(out.to_path_buf());
    write_text(&out.join("resolved-config.json"), &resolved.to_json())?;
    let eps = config.physics.eps;
    match config.mode {
        Mode::Limit => {
            let scenario = Scenario::build(config, eps)?;
            let limit = run_limit_scenario(&scenario, config, reporter)?;
            write_limit_snapshots(&out.join("snapshots"), config, &limit)?;
            write_text(
                &out.join("diagnostics.csv"),
                &diagnostics_csv(&limit.records),
            )?;
            Ok(RunOutcome::Limit(limit))
        }
        Mode::Kinetic | Mode::Compare => {
            let scenario = Scenario::build(config, eps)?;
            let limit = run_limit_scenario(&scenario, config, reporter)?;
            let kinetic = run_kinetic_scenario(
                &scenario,
                config,
                &limit,
                Some(&out.join("snapshots")),
                reporter,
            )?;
            write_text(
                &out.join("diagnostics.csv"),
                &diagnostics_csv(&kinetic.records),
            )?;
            if config.mode == Mode::Kinetic {
                return Ok(RunOutcome::Kinetic(kinetic));
            }
            write_limit_snapshots(&out.join("limit").join("snapshots"), config, &limit)?;
            write_text(
                &out.join("limit").join("diagnostics.csv"),
                &diagnostics_csv(&limit.records),
            )?;
            write_text(
                &out.join("comparison.csv"),
                &comparison_csv(&kinetic.comparison),
            )?;
            Ok(RunOutcome::Compare { kinetic, limit })
        }
        Mode::Sweep => Ok(RunOutcome::Sweep(sweep(config, Some(out), reporter)?)),
    }
}

/// Compares two stored trajectories and writes `comparison.csv` to `out`.
pub fn compare_dirs(a: &Path, b: &Path, out: &Path) -> Result<Vec<ComparisonRow>> {
    let ta = StoredTrajectory::open(a)?;
    let tb = StoredTrajectory::open(b)?;
    let rows = compare_trajectories(&ta, &tb)?;
    let _lock = OutputLock::acquire(out)?;
    write_text(&out.join("comparison.csv"), &comparison_csv(&rows))?;
    Ok(rows)
}
