use std::path::PathBuf;

use gyrodrift::diagnostics;
use gyrodrift::guiding_center::{limit_free_energy, LimitOptions, LimitState};
use gyrodrift::harness::{self, FieldFile, Reporter, RunConfig, RunOutcome};
use gyrodrift::kinetic::{init_well_prepared, stable_dt, KineticOptions, KineticState};
use gyrodrift::{eval_magnetic, neutral_background, Density, DensityRole, Error, VelocityGrid};
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        Error::InvalidGrid(_)
        | Error::InvalidParams(_)
        | Error::InvalidMagnetic(_)
        | Error::InvalidInput(_)
        | Error::Config { .. }
        | Error::FieldFormat(_)
        | Error::Neutrality { .. } => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// Physical constants of the scaled system.
#[pyclass(module = "gyrodrift_py", get_all, set_all)]
#[derive(Clone, Copy)]
struct PhysicsParams {
    q: f64,
    m: f64,
    sigma: f64,
    tau: f64,
    eps0: f64,
    eps: f64,
    final_time: f64,
}

#[pymethods]
impl PhysicsParams {
    #[new]
    #[pyo3(signature = (q=1.0, m=1.0, sigma=1.0, tau=1.0, eps0=1.0, eps=1.0, final_time=0.5))]
    fn new(
        q: f64,
        m: f64,
        sigma: f64,
        tau: f64,
        eps0: f64,
        eps: f64,
        final_time: f64,
    ) -> PyResult<Self> {
        let p = Self {
            q,
            m,
            sigma,
            tau,
            eps0,
            eps,
            final_time,
        };
        p.core().validate().map_err(to_py)?;
        Ok(p)
    }

    fn __repr__(&self) -> String {
        format!(
            "PhysicsParams(q={}, m={}, sigma={}, tau={}, eps0={}, eps={}, final_time={})",
            self.q, self.m, self.sigma, self.tau, self.eps0, self.eps, self.final_time
        )
    }
}

impl PhysicsParams {
    fn core(&self) -> gyrodrift::PhysicsParams {
        gyrodrift::PhysicsParams {
            q: self.q,
            m: self.m,
            sigma: self.sigma,
            tau: self.tau,
            eps0: self.eps0,
            eps: self.eps,
            final_time: self.final_time,
        }
    }
}

/// Cell-centered grid on `[-L, L]^2`.
#[pyclass(module = "gyrodrift_py")]
#[derive(Clone, Copy)]
struct SpatialGrid {
    inner: gyrodrift::SpatialGrid,
}

#[pymethods]
impl SpatialGrid {
    #[new]
    fn new(half_width: f64, n: usize) -> PyResult<Self> {
        Ok(Self {
            inner: gyrodrift::SpatialGrid::new(half_width, n).map_err(to_py)?,
        })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn dx(&self) -> f64 {
        self.inner.dx()
    }

    #[getter]
    fn half_width(&self) -> f64 {
        self.inner.half_width()
    }

    /// Node coordinates along one axis.
    fn nodes(&self) -> Vec<f64> {
        self.inner.axis().nodes()
    }

    /// Samples `n_in` as a normalized Gaussian of the given mass.
    #[pyo3(signature = (center, width, mass=1.0))]
    fn gaussian(&self, center: [f64; 2], width: f64, mass: f64) -> PyResult<Vec<f64>> {
        let mut v = self.inner.sample(|a, b| {
            let (d1, d2) = (a - center[0], b - center[1]);
            (-(d1 * d1 + d2 * d2) / (width * width)).exp()
        });
        let total: f64 = v.iter().sum::<f64>() * self.inner.cell_area();
        if !(total > 0.0) {
            return Err(PyValueError::new_err("Gaussian has no mass on the grid"));
        }
        v.iter_mut().for_each(|x| *x *= mass / total);
        Ok(v)
    }
}

/// Magnetic amplitude profile.
#[pyclass(module = "gyrodrift_py")]
#[derive(Clone, Copy)]
struct MagneticSpec {
    inner: gyrodrift::MagneticSpec,
}

#[pymethods]
impl MagneticSpec {
    #[staticmethod]
    fn uniform(b0: f64) -> PyResult<Self> {
        let inner = gyrodrift::MagneticSpec::Uniform { b0 };
        inner.validate().map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn bump(b0: f64, amplitude: f64, width: f64) -> PyResult<Self> {
        let inner = gyrodrift::MagneticSpec::Bump {
            b0,
            amplitude,
            width,
        };
        inner.validate().map_err(to_py)?;
        Ok(Self { inner })
    }

    fn value(&self, x1: f64, x2: f64) -> f64 {
        self.inner.value(x1, x2)
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.inner)
    }
}

fn density(grid: gyrodrift::SpatialGrid, values: Vec<f64>, role: DensityRole) -> PyResult<Density> {
    Density::new(grid, values, role).map_err(to_py)
}

/// Free-space Poisson solver.
#[pyclass(module = "gyrodrift_py")]
struct PoissonSolver {
    inner: gyrodrift::PoissonSolver,
}

#[pymethods]
impl PoissonSolver {
    #[new]
    #[pyo3(signature = (grid, params, check_neutrality=true))]
    fn new(grid: &SpatialGrid, params: &PhysicsParams, check_neutrality: bool) -> PyResult<Self> {
        let s = gyrodrift::PoissonSolver::new(&grid.inner, &params.core()).map_err(to_py)?;
        Ok(Self {
            inner: if check_neutrality { s } else { s.relaxed() },
        })
    }

    /// Returns `(phi, e1, e2)` for the net charge density.
    fn solve(&self, net_charge: Vec<f64>) -> PyResult<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let rho = density(*self.inner.grid(), net_charge, DensityRole::NetCharge)?;
        let (phi, e) = self.inner.solve(&rho).map_err(to_py)?;
        Ok((phi.values, e.x1, e.x2))
    }
}

/// Kinetic solver started from well-prepared data `n_in M`.
#[pyclass(module = "gyrodrift_py", unsendable)]
struct KineticSolver {
    solver: gyrodrift::kinetic::KineticSolver,
    state: KineticState,
    dt: f64,
}

#[pymethods]
impl KineticSolver {
    #[new]
    #[pyo3(signature = (params, grid, v_max, nv, magnetic, n_in, background_width=1.5, dt_max=0.05))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        params: &PhysicsParams,
        grid: &SpatialGrid,
        v_max: f64,
        nv: usize,
        magnetic: &MagneticSpec,
        n_in: Vec<f64>,
        background_width: f64,
        dt_max: f64,
    ) -> PyResult<Self> {
        let p = params.core();
        let velocity = VelocityGrid::new(v_max, nv).map_err(to_py)?;
        let n_in = density(grid.inner, n_in, DensityRole::Plasma)?;
        let background = neutral_background(&n_in, background_width).map_err(to_py)?;
        let mag = eval_magnetic(&magnetic.inner, &grid.inner, &p).map_err(to_py)?;
        let dt = stable_dt(&p, &mag, dt_max);
        let solver = gyrodrift::kinetic::KineticSolver::new(
            p,
            velocity,
            mag,
            background,
            KineticOptions::default(),
        )
        .map_err(to_py)?;
        let f = init_well_prepared(&n_in, &velocity, p.sigma).map_err(to_py)?;
        let state = solver.state(f, 0.0).map_err(to_py)?;
        Ok(Self { solver, state, dt })
    }

    /// Advances `steps` steps of the stable step size.
    #[pyo3(signature = (steps=1))]
    fn step(&mut self, steps: usize) -> PyResult<f64> {
        let plan = self.solver.plan(self.dt).map_err(to_py)?;
        for _ in 0..steps {
            self.solver.step(&mut self.state, &plan).map_err(to_py)?;
        }
        Ok(self.state.t)
    }

    #[getter]
    fn t(&self) -> f64 {
        self.state.t
    }

    #[getter]
    fn dt(&self) -> f64 {
        self.dt
    }

    fn density(&self) -> Vec<f64> {
        self.state.n.values.clone()
    }

    fn mass(&self) -> f64 {
        self.state.f.mass()
    }

    #[getter]
    fn dissipation(&self) -> f64 {
        self.state.dissipation
    }

    /// `(kinetic, potential, entropy, total)`.
    fn free_energy(&self) -> (f64, f64, f64, f64) {
        let fe =
            diagnostics::free_energy_kinetic(&self.state.f, &self.state.e, &self.solver.params);
        (fe.kinetic, fe.potential, fe.entropy, fe.total)
    }

    fn relative_entropy_velocity(&self) -> PyResult<f64> {
        diagnostics::relative_entropy_velocity(
            &self.state.f,
            &self.state.n,
            &self.solver.maxwellian,
        )
        .map_err(to_py)
    }
}

/// Guiding-center limit solver.
#[pyclass(module = "gyrodrift_py")]
struct LimitSolver {
    solver: gyrodrift::guiding_center::LimitSolver,
    state: LimitState,
}

#[pymethods]
impl LimitSolver {
    #[new]
    #[pyo3(signature = (params, grid, magnetic, n_in, background_width=1.5))]
    fn new(
        params: &PhysicsParams,
        grid: &SpatialGrid,
        magnetic: &MagneticSpec,
        n_in: Vec<f64>,
        background_width: f64,
    ) -> PyResult<Self> {
        let p = params.core();
        let n_in = density(grid.inner, n_in, DensityRole::Plasma)?;
        let background = neutral_background(&n_in, background_width).map_err(to_py)?;
        let mag = eval_magnetic(&magnetic.inner, &grid.inner, &p).map_err(to_py)?;
        let solver = gyrodrift::guiding_center::LimitSolver::new(
            p,
            mag,
            background,
            LimitOptions::default(),
        )
        .map_err(to_py)?;
        let state = solver.state(n_in, 0.0).map_err(to_py)?;
        Ok(Self { solver, state })
    }

    #[pyo3(signature = (dt, steps=1))]
    fn step(&mut self, dt: f64, steps: usize) -> PyResult<f64> {
        for _ in 0..steps {
            self.solver.step(&mut self.state, dt).map_err(to_py)?;
        }
        Ok(self.state.t)
    }

    #[getter]
    fn t(&self) -> f64 {
        self.state.t
    }

    fn density(&self) -> Vec<f64> {
        self.state.n.values.clone()
    }

    fn mass(&self) -> f64 {
        self.state.n.mass()
    }

    /// `(entropy, potential, total)`.
    fn free_energy(&self) -> (f64, f64, f64) {
        let fe = limit_free_energy(&self.state.n, &self.state.e, &self.solver.params);
        (fe.entropy, fe.potential, fe.total)
    }
}

/// `h(s) = s ln s - s + 1`.
#[pyfunction]
fn entropy_h(s: f64) -> PyResult<f64> {
    diagnostics::entropy_h(s).map_err(to_py)
}

/// Returns `(l1_distance, ck_bound)`.
#[pyfunction]
#[pyo3(signature = (g, g0, weight=1.0))]
fn csiszar_kullback(g: Vec<f64>, g0: Vec<f64>, weight: f64) -> PyResult<(f64, f64)> {
    let a = diagnostics::csiszar_kullback(&g, &g0, weight).map_err(to_py)?;
    Ok((a.l1, a.bound))
}

/// Validates a JSON config and returns it with defaults applied.
#[pyfunction]
fn resolve_config(text: &str) -> PyResult<String> {
    Ok(RunConfig::from_json(text, "<string>")
        .map_err(to_py)?
        .to_json())
}

/// Runs a JSON config, writing artifacts under `out`. Returns the path of
/// the main CSV output.
#[pyfunction]
#[pyo3(signature = (config_json, out, quiet=true))]
fn run(py: Python<'_>, config_json: &str, out: PathBuf, quiet: bool) -> PyResult<String> {
    let config = RunConfig::from_json(config_json, "<string>").map_err(to_py)?;
    let outcome = py
        .allow_threads(|| harness::run(&config, &out, Reporter { quiet }))
        .map_err(to_py)?;
    let name = match outcome {
        RunOutcome::Sweep(_) => "sweep.csv",
        RunOutcome::Compare { .. } => "comparison.csv",
        _ => "diagnostics.csv",
    };
    Ok(out.join(name).display().to_string())
}

#[pyfunction]
fn dump_field(path: PathBuf, dims: Vec<usize>, data: Vec<f64>) -> PyResult<()> {
    let file = FieldFile::new(dims, data).map_err(to_py)?;
    harness::dump_field(&file, &path).map_err(to_py)
}

/// Returns `(dims, data)`.
#[pyfunction]
fn load_field(path: PathBuf) -> PyResult<(Vec<usize>, Vec<f64>)> {
    let f = harness::load_field(&path).map_err(to_py)?;
    Ok((f.dims, f.data))
}

#[pymodule]
fn gyrodrift_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PhysicsParams>()?;
    m.add_class::<SpatialGrid>()?;
    m.add_class::<MagneticSpec>()?;
    m.add_class::<PoissonSolver>()?;
    m.add_class::<KineticSolver>()?;
    m.add_class::<LimitSolver>()?;
    m.add_function(wrap_pyfunction!(entropy_h, m)?)?;
    m.add_function(wrap_pyfunction!(csiszar_kullback, m)?)?;
    m.add_function(wrap_pyfunction!(resolve_config, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(dump_field, m)?)?;
    m.add_function(wrap_pyfunction!(load_field, m)?)?;
    Ok(())
}
