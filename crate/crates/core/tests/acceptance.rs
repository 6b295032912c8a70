//! Acceptance criteria at reference scale. Prints one PASS/FAIL line per
//! criterion and exits nonzero if any fails. Positional arguments select
//! criteria by number (e.g. `cargo test --test acceptance -- 1 5`).

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use gyrodrift::diagnostics::{free_energy_kinetic, kinetic_energy, relative_entropy_velocity};
use gyrodrift::guiding_center::{
    limit_free_energy, perp, trace_back, volume_defect, FieldSpline, LimitOptions, LimitSolver,
};
use gyrodrift::harness::{self, Reporter, RunConfig};
use gyrodrift::kinetic::{
    collision_step, init_shifted, init_well_prepared, moments, rotation_step, stable_dt,
    CollisionPropagator, Interpolation, KineticOptions, KineticSolver, Schedule,
};
use gyrodrift::{
    eval_magnetic, make_grids, maxwellian, neutral_background, Density, DensityRole, MagneticSpec,
    PhysicsParams, PoissonSolver, SpatialGrid, VelocityGrid,
};

// Reference desk scale.
const L: f64 = 8.0;
const NX_KINETIC: usize = 64;
const NX_LIMIT: usize = 128;
const V_MAX: f64 = 6.0;
const NV: usize = 48;
const T_FINAL: f64 = 0.5;

// Tolerances.
const POISSON_REL_LINF: f64 = 1e-4;
const POISSON_RUNTIME_S: f64 = 1.0;
const COLLISION_MEAN_TOL: f64 = 1e-6;
const COLLISION_MASS_TOL: f64 = 1e-12;
const COLLISION_STEPS: usize = 50;
const ROTATION_KE_TOL: f64 = 1e-8;
const ROTATION_TURN_TOL: f64 = 1e-6;
const BALANCE_TOL: f64 = 5e-3;
const BALANCE_HALVING_MAX_RATIO: f64 = 0.6;
const RUN_MASS_TOL: f64 = 1e-8;
const RADIAL_L2_TOL: f64 = 1e-3;
const LIMIT_FREE_ENERGY_TOL: f64 = 1e-3;
const VOLUME_TOL: f64 = 1e-4;
const VOLUME_MIN_ORDER: f64 = 2.0;
const SWEEP_EPS: [f64; 3] = [0.2, 0.1, 0.05];
const SWEEP_BUDGET_S: f64 = 3600.0;
const CK_TOL: f64 = 1e-10;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn scratch_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!(
        "gyrodrift-acceptance-{}-{name}",
        std::process::id()
    ));
    let _ = fs::remove_dir_all(&dir);
    dir
}

fn gaussian_density(g: SpatialGrid, center: [f64; 2], width: f64) -> Density {
    Density::from_fn(g, DensityRole::Plasma, |a, b| {
        let (d1, d2) = (a - center[0], b - center[1]);
        (-(d1 * d1 + d2 * d2) / (width * width)).exp() / (PI * width * width)
    })
    .unwrap()
}

/// Enclosed charge of a radial profile by composite Simpson on `[0, r]`.
fn enclosed(rho: impl Fn(f64) -> f64, r: f64) -> f64 {
    let n = 2 * ((r / 1e-3).ceil() as usize).max(1);
    let h = r / n as f64;
    let f = |s: f64| 2.0 * PI * s * rho(s);
    let mut acc = f(0.0) + f(r);
    for i in 1..n {
        acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
    }
    acc * h / 3.0
}

fn criterion_1() -> Outcome {
    let started = Instant::now();
    let g = SpatialGrid::new(L, NX_LIMIT).unwrap();
    let p = PhysicsParams::default();
    let solver = PoissonSolver::new(&g, &p).unwrap().relaxed();
    let rho = gaussian_density(g, [0.0, 0.0], 1.0);
    let e = solver.field_from_charge(&rho).unwrap();
    let elapsed = started.elapsed().as_secs_f64();
    let profile = |r: f64| (-r * r).exp() / PI;
    let (mut err, mut scale) = (0.0f64, 0.0f64);
    for k in 0..g.len() {
        let [x1, x2] = g.position(k);
        let r = x1.hypot(x2);
        let mag = p.q / (2.0 * PI * p.eps0) * enclosed(profile, r) / r;
        err = err.max(
            (e.x1[k] - mag * x1 / r)
                .abs()
                .max((e.x2[k] - mag * x2 / r).abs()),
        );
        scale = scale.max(mag);
    }
    let rel = err / scale;
    outcome(
        rel < POISSON_REL_LINF && elapsed < POISSON_RUNTIME_S,
        format!(
            "rel Linf {rel:.3e} (< {POISSON_REL_LINF:e}), runtime {elapsed:.3}s (< {POISSON_RUNTIME_S}s)"
        ),
    )
}

/// Velocity box for the collision and rotation criteria; see the README.
fn wide_velocity() -> VelocityGrid {
    VelocityGrid::new(8.0, 64).unwrap()
}

fn criterion_2() -> Outcome {
    let g = SpatialGrid::new(L, 8).unwrap();
    let v = wide_velocity();
    let p = PhysicsParams::default();
    let n = Density::from_fn(g, DensityRole::Plasma, |a, b| {
        0.5 + (-(a * a + b * b) / 16.0).exp()
    })
    .unwrap();
    let u = [0.6, 0.8];
    let mut f = init_shifted(&n, &v, p.sigma, u).unwrap();
    let m = maxwellian(&v, p.sigma).unwrap();
    let mu = 0.1;
    let prop = CollisionPropagator::new(&v, mu, p.sigma);
    let mean = |f: &gyrodrift::Distribution| {
        let mo = moments(f, &p);
        (0..g.len())
            .map(|k| {
                [
                    mo.j.x1[k] / (p.q * mo.n.values[k]),
                    mo.j.x2[k] / (p.q * mo.n.values[k]),
                ]
            })
            .collect::<Vec<_>>()
    };
    let rel =
        |f: &gyrodrift::Distribution| relative_entropy_velocity(f, &moments(f, &p).n, &m).unwrap();
    let u0 = mean(&f);
    let mut prev_rel = rel(&f);
    let (mut monotone, mut mean_err, mut mass_err) = (true, 0.0f64, 0.0f64);
    for step in 1..=COLLISION_STEPS {
        let before = f.mass();
        collision_step(&mut f, &prop);
        mass_err = mass_err.max(((f.mass() - before) / before).abs());
        let decay = (-mu * step as f64).exp();
        for (now, start) in mean(&f).iter().zip(&u0) {
            mean_err = mean_err
                .max((now[0] - start[0] * decay).abs())
                .max((now[1] - start[1] * decay).abs());
        }
        let r = rel(&f);
        monotone &= r < prev_rel;
        prev_rel = r;
    }
    outcome(
        monotone && mean_err < COLLISION_MEAN_TOL && mass_err < COLLISION_MASS_TOL,
        format!(
            "rel entropy monotone {monotone}, mean decay err {mean_err:.3e} (< {COLLISION_MEAN_TOL:e}), \
             mass drift/step {mass_err:.3e} (< {COLLISION_MASS_TOL:e}); v_max 8, Nv 64"
        ),
    )
}

fn criterion_3() -> Outcome {
    let g = SpatialGrid::new(L, 8).unwrap();
    let v = wide_velocity();
    let p = PhysicsParams::default();
    let n = Density::from_fn(g, DensityRole::Plasma, |a, b| {
        0.5 + (-(a * a + b * b) / 16.0).exp()
    })
    .unwrap();
    let mut ke_err = 0.0f64;
    let mut turn_err = 0.0f64;
    let mut spline_turn_err = 0.0f64;
    for (u, interp) in [
        ([0.0, 0.0], Interpolation::Spectral),
        ([1.0, 0.0], Interpolation::Spectral),
        ([0.6, 0.8], Interpolation::CubicSpline),
    ] {
        let f0 = init_shifted(&n, &v, p.sigma, u).unwrap();
        let ke0 = kinetic_energy(&f0);
        let angles: Vec<f64> = (0..g.len())
            .map(|k| 0.1 + 0.6 * (k as f64 / g.len() as f64))
            .collect();
        let mut f = f0.clone();
        rotation_step(&mut f, &angles, interp);
        ke_err = ke_err.max(((kinetic_energy(&f) - ke0) / ke0).abs());

        let quarter = vec![PI / 4.0; g.len()];
        let mut f = f0.clone();
        for _ in 0..8 {
            rotation_step(&mut f, &quarter, interp);
            ke_err = ke_err.max(((kinetic_energy(&f) - ke0) / ke0).abs());
        }
        let diff = f
            .values
            .iter()
            .zip(&f0.values)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        match interp {
            Interpolation::Spectral => turn_err = turn_err.max(diff / f0.max()),
            Interpolation::CubicSpline => spline_turn_err = diff / f0.max(),
        }
    }
    outcome(
        ke_err < ROTATION_KE_TOL && turn_err < ROTATION_TURN_TOL,
        format!(
            "kinetic energy rel err {ke_err:.3e} (< {ROTATION_KE_TOL:e}), full turn rel err {turn_err:.3e} \
             (< {ROTATION_TURN_TOL:e}); v_max 8, Nv 64; optional cubic-spline full turn {spline_turn_err:.1e} (not audited)"
        ),
    )
}

struct BalanceRun {
    max_residual: f64,
    mass_drift: f64,
    steps: usize,
}

fn balance_run(eps: f64, dt_factor: f64) -> BalanceRun {
    let p = PhysicsParams {
        eps,
        final_time: T_FINAL,
        ..PhysicsParams::default()
    };
    let (s, v) = make_grids(&p, L, NX_KINETIC, V_MAX, NV).unwrap();
    let n_in = gaussian_density(s, [1.0, 0.0], 1.0);
    let d = neutral_background(&n_in, 1.5).unwrap();
    let mag = eval_magnetic(&MagneticSpec::Uniform { b0: 1.0 }, &s, &p).unwrap();
    let bound = stable_dt(&p, &mag, 0.05) * dt_factor;
    let mut solver = KineticSolver::new(p, v, mag, d, KineticOptions::default()).unwrap();
    let mut st = solver
        .state(init_well_prepared(&n_in, &v, p.sigma).unwrap(), 0.0)
        .unwrap();
    let schedule = Schedule::new(T_FINAL, bound, 1).unwrap();
    let plan = solver.plan(schedule.dt).unwrap();
    let fe0 = free_energy_kinetic(&st.f, &st.e, &p);
    let scale = eps * (fe0.kinetic.abs() + fe0.entropy.abs() + fe0.potential.abs());
    let mass0 = st.f.mass();
    let mut prev = fe0.total;
    let mut max_residual = 0.0f64;
    for _ in 0..schedule.steps {
        let report = solver.step(&mut st, &plan).unwrap();
        let fe = free_energy_kinetic(&st.f, &st.e, &p).total;
        let residual = (eps * (fe - prev) + schedule.dt * report.step_dissipation) / schedule.dt;
        max_residual = max_residual.max((residual / scale).abs());
        prev = fe;
    }
    BalanceRun {
        max_residual,
        mass_drift: ((st.f.mass() - mass0) / mass0).abs(),
        steps: schedule.steps,
    }
}

fn criterion_4() -> Outcome {
    let coarse = balance_run(0.1, 1.0);
    let fine = balance_run(0.1, 0.5);
    let ratio = fine.max_residual / coarse.max_residual;
    let drift = coarse.mass_drift.max(fine.mass_drift);
    outcome(
        coarse.max_residual < BALANCE_TOL
            && ratio < BALANCE_HALVING_MAX_RATIO
            && drift < RUN_MASS_TOL,
        format!(
            "max residual {:.3e} ({} steps) -> {:.3e} ({} steps) at dt/2, ratio {ratio:.3} \
             (< {BALANCE_HALVING_MAX_RATIO}), residual < {BALANCE_TOL:e}; mass drift {drift:.3e} (< {RUN_MASS_TOL:e})",
            coarse.max_residual, coarse.steps, fine.max_residual, fine.steps
        ),
    )
}

fn criterion_5() -> Outcome {
    let p = PhysicsParams::default();
    let g = SpatialGrid::new(L, NX_LIMIT).unwrap();
    let n_in = gaussian_density(g, [0.0, 0.0], 1.0);
    let d = neutral_background(&n_in, 1.5).unwrap();
    let mag = eval_magnetic(&MagneticSpec::Uniform { b0: 1.0 }, &g, &p).unwrap();
    let solver = LimitSolver::new(p, mag, d, LimitOptions::default()).unwrap();
    let mut st = solver.state(n_in.clone(), 0.0).unwrap();
    let fe0 = limit_free_energy(&st.n, &st.e, &p).total;
    for _ in 0..200 {
        solver.step(&mut st, 5e-3).unwrap();
    }
    let num: f64 =
        st.n.values
            .iter()
            .zip(&n_in.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
    let den: f64 = n_in.values.iter().map(|a| a * a).sum();
    let l2 = (num / den).sqrt();
    let drift = ((limit_free_energy(&st.n, &st.e, &p).total - fe0) / fe0.abs()).abs();
    outcome(
        l2 < RADIAL_L2_TOL && drift < LIMIT_FREE_ENERGY_TOL,
        format!(
            "rel L2 change {l2:.3e} (< {RADIAL_L2_TOL:e}), free energy drift {drift:.3e} \
             (< {LIMIT_FREE_ENERGY_TOL:e}); T=1, dt 5e-3, Nx {NX_LIMIT}"
        ),
    )
}

fn radial_field(x: [f64; 2], c: [f64; 2], width: f64, mass: f64) -> [f64; 2] {
    let (d1, d2) = (x[0] - c[0], x[1] - c[1]);
    let r2 = d1 * d1 + d2 * d2;
    if r2 == 0.0 {
        return [0.0, 0.0];
    }
    let s = mass * (1.0 - (-r2 / (width * width)).exp()) / (2.0 * PI * r2);
    [s * d1, s * d2]
}

fn criterion_6() -> Outcome {
    let p = PhysicsParams::default();
    let spec = MagneticSpec::Bump {
        b0: 1.0,
        amplitude: 0.5,
        width: 2.0,
    };
    let b = |x: [f64; 2]| spec.value(x[0], x[1]);
    let samples: Vec<[f64; 2]> = (0..16)
        .map(|k| {
            let (a, r) = (0.1 + 0.39 * k as f64, 0.4 + 0.17 * k as f64);
            [r * a.cos(), r * a.sin()]
        })
        .collect();
    let worst = |flow: &dyn Fn([f64; 2]) -> [f64; 2], delta: f64| {
        samples
            .iter()
            .map(|x| volume_defect(flow, b, *x, delta))
            .fold(0.0f64, f64::max)
    };

    // Solver drift on the grid, one step of 1e-2.
    let g = SpatialGrid::new(L, NX_LIMIT).unwrap();
    let mag = eval_magnetic(&spec, &g, &p).unwrap();
    let n_in = gaussian_density(g, [1.0, 0.0], 1.0);
    let d = neutral_background(&n_in, 1.5).unwrap();
    let solver = LimitSolver::new(p, mag, d, LimitOptions::default()).unwrap();
    let st = solver.state(n_in, 0.0).unwrap();
    let u_grid = FieldSpline::new(&st.drift);
    let grid_defect = worst(&|x| trace_back(|z, _| u_grid.eval(z), x, 1e-2), 1e-3);

    // Analytic drift of a strong charge pair, flowed to T = 1.6.
    let qm = p.charge_to_mass();
    let u = |x: [f64; 2]| {
        let a = radial_field(x, [1.0, 0.0], 1.0, 20.0);
        let c = radial_field(x, [0.0, 0.0], 1.5, 20.0);
        let pe = perp([a[0] - c[0], a[1] - c[1]]);
        let bx = b(x);
        let gb = spec.gradient(x[0], x[1]);
        let pg = perp(gb);
        let w = qm * bx;
        [
            pe[0] / bx - p.sigma * qm * pg[0] / (w * w),
            pe[1] / bx - p.sigma * qm * pg[1] / (w * w),
        ]
    };
    let flow_defect = |dt: f64| {
        let steps = (1.6 / dt).round() as usize;
        worst(
            &|x| {
                let mut y = x;
                for _ in 0..steps {
                    y = trace_back(|z, _| u(z), y, dt);
                }
                y
            },
            1e-4,
        )
    };
    let at_small = flow_defect(1e-2);
    let defects: Vec<f64> = [0.2, 0.1, 0.05].iter().map(|dt| flow_defect(*dt)).collect();
    let order = defects
        .windows(2)
        .map(|w| (w[0] / w[1]).log2())
        .fold(f64::INFINITY, f64::min);
    outcome(
        grid_defect < VOLUME_TOL && at_small < VOLUME_TOL && order >= VOLUME_MIN_ORDER,
        format!(
            "grid drift defect {grid_defect:.3e}, analytic drift defect {at_small:.3e} at dt 1e-2 (< {VOLUME_TOL:e}); \
             defects {:.3e}, {:.3e}, {:.3e} at dt 0.2, 0.1, 0.05, observed order {order:.2} (>= {VOLUME_MIN_ORDER})",
            defects[0], defects[1], defects[2]
        ),
    )
}

fn sweep_config() -> RunConfig {
    let mut config = reference_config();
    config.scenario = "acceptance-sweep".into();
    config.mode = harness::Mode::Sweep;
    config.eps_list = SWEEP_EPS.to_vec();
    config
}

fn reference_config() -> RunConfig {
    RunConfig::load(&workspace_root().join("configs/reference.json")).unwrap()
}

struct SweepResult {
    report: Option<harness::SweepReport>,
    error: Option<String>,
    elapsed: f64,
    dir: PathBuf,
}

fn run_sweep() -> SweepResult {
    let dir = scratch_dir("sweep");
    let started = Instant::now();
    let result = harness::run(&sweep_config(), &dir, Reporter { quiet: true });
    let elapsed = started.elapsed().as_secs_f64();
    match result {
        Ok(harness::RunOutcome::Sweep(report)) => SweepResult {
            report: Some(report),
            error: None,
            elapsed,
            dir,
        },
        Ok(_) => unreachable!("sweep mode returns a sweep report"),
        Err(e) => SweepResult {
            report: None,
            error: Some(e.to_string()),
            elapsed,
            dir,
        },
    }
}

fn criterion_7(sweep: &SweepResult) -> Outcome {
    let Some(report) = &sweep.report else {
        return outcome(
            false,
            format!("sweep failed: {}", sweep.error.as_deref().unwrap_or("")),
        );
    };
    let sups: Vec<String> = report
        .rows
        .iter()
        .map(|r| format!("{:.3e}", r.sup_modulated_energy))
        .collect();
    let diss: Vec<String> = report
        .rows
        .iter()
        .map(|r| format!("{:.3e}", r.scaled_dissipation))
        .collect();
    let slope = report.slope.unwrap_or(f64::NAN);
    outcome(
        report.modulated_decreasing == Some(true)
            && report.dissipation_decreasing == Some(true)
            && slope > 0.0
            && sweep.elapsed < SWEEP_BUDGET_S,
        format!(
            "eps {SWEEP_EPS:?}: sup modulated energy [{}], (1/eps) dissipation [{}], slope {slope:.3} (> 0), \
             runtime {:.0}s (< {SWEEP_BUDGET_S}s)",
            sups.join(", "),
            diss.join(", "),
            sweep.elapsed
        ),
    )
}

fn criterion_10(sweep: &SweepResult) -> Outcome {
    let Some(report) = &sweep.report else {
        return outcome(false, "sweep failed");
    };
    let flux: Vec<String> = report
        .rows
        .iter()
        .map(|r| format!("{:.3e}", r.flux_l1))
        .collect();
    outcome(
        report.flux_decreasing == Some(true),
        format!(
            "final ||F^eps||_1 [{}] for eps {SWEEP_EPS:?}",
            flux.join(", ")
        ),
    )
}

/// Counts CK violations in the `l1_dist` and `ck_bound` columns of every
/// diagnostics CSV below `dir`.
fn audit_ck(dir: &Path, pairs: &mut usize, violations: &mut usize) {
    let Ok(entries) = fs::read_dir(dir) else {
        return;
    };
    for entry in entries.flatten() {
        let path = entry.path();
        if path.is_dir() {
            audit_ck(&path, pairs, violations);
            continue;
        }
        let name = path.file_name().unwrap().to_string_lossy().to_string();
        if !(name.starts_with("diagnostics") && name.ends_with(".csv")) {
            continue;
        }
        let text = fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        let header: Vec<&str> = lines.next().unwrap().split(',').collect();
        let col = |n: &str| header.iter().position(|h| *h == n).unwrap();
        let (l1, ck) = (col("l1_dist"), col("ck_bound"));
        for line in lines {
            let cells: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
            *pairs += 1;
            if cells[l1] > cells[ck] + CK_TOL {
                *violations += 1;
            }
        }
    }
}

fn criterion_8(dirs: &[&Path]) -> Outcome {
    let (mut pairs, mut violations) = (0, 0);
    for dir in dirs {
        audit_ck(dir, &mut pairs, &mut violations);
    }
    outcome(
        pairs > 0 && violations == 0,
        format!("{violations} violations over {pairs} snapshot pairs"),
    )
}

fn criterion_9(a: &Path, b: &Path) -> Outcome {
    let config = reference_config();
    let first = harness::run(&config, a, Reporter { quiet: true });
    let second = harness::run(&config, b, Reporter { quiet: true });
    if let Err(e) = first.and(second) {
        return outcome(false, format!("reference run failed: {e}"));
    }
    let x = fs::read(a.join("diagnostics.csv")).unwrap();
    let y = fs::read(b.join("diagnostics.csv")).unwrap();
    outcome(
        x == y,
        format!(
            "diagnostics.csv {} bytes, {} rows, identical: {}",
            x.len(),
            x.iter().filter(|c| **c == b'\n').count() - 1,
            x == y
        ),
    )
}

fn main() -> ExitCode {
    let selected: Vec<usize> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .filter_map(|a| a.parse().ok())
        .collect();
    let wanted = |k: usize| selected.is_empty() || selected.contains(&k);
    let names = [
        "Poisson Gauss-law oracle",
        "collision H-theorem",
        "rotation exactness",
        "kinetic free-energy balance",
        "limit radial steady state",
        "volume invariant",
        "eps-sweep modulated energy",
        "Csiszar-Kullback audit",
        "determinism",
        "flux remainder",
    ];
    let mut results: Vec<(usize, Outcome)> = Vec::new();
    let mut report = |k: usize, o: Outcome| {
        println!(
            "[{}] criterion {k:>2} {}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            names[k - 1],
            o.detail
        );
        results.push((k, o));
    };
    let quick: [(usize, fn() -> Outcome); 6] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (5, criterion_5),
        (6, criterion_6),
        (4, criterion_4),
    ];
    for (k, run) in quick {
        if wanted(k) {
            report(k, run());
        }
    }
    let (det_a, det_b) = (scratch_dir("det-a"), scratch_dir("det-b"));
    if wanted(9) || wanted(8) {
        report(9, criterion_9(&det_a, &det_b));
    }
    if wanted(7) || wanted(8) || wanted(10) {
        let sweep = run_sweep();
        if wanted(7) {
            report(7, criterion_7(&sweep));
        }
        if wanted(10) {
            report(10, criterion_10(&sweep));
        }
        if wanted(8) {
            report(8, criterion_8(&[&sweep.dir, &det_a, &det_b]));
        }
        let _ = fs::remove_dir_all(&sweep.dir);
    }
    let _ = fs::remove_dir_all(&det_a);
    let _ = fs::remove_dir_all(&det_b);
    let failed = results.iter().filter(|(_, o)| !o.pass).count();
    println!(
        "acceptance: {} passed, {failed} failed",
        results.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
