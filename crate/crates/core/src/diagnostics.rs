//! Scalar functionals: energies, entropies, dissipation, modulated energy,
//! the Csiszar-Kullback audit and residuals of the moment equations.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fields::{Density, Distribution, Field, Maxwellian, Potential};
use crate::grid::PhysicsParams;
use crate::magnetic::MagneticField;
use crate::poisson::field_energy;
use crate::sum;

/// Densities below this fraction of the maximum count as zero in ratios.
pub const DENSITY_FLOOR_REL: f64 = 1e-30;

/// Tolerance of the Csiszar-Kullback audit.
pub const CK_TOL: f64 = 1e-10;

/// `h(s) = s ln s - s + 1` with `h(0) = 1`.
pub fn entropy_h(s: f64) -> Result<f64> {
    if !(s >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "h is defined for s >= 0, got {s}"
        )));
    }
    Ok(h(s))
}

#[inline]
fn h(s: f64) -> f64 {
    if s == 0.0 {
        1.0
    } else {
        s * s.ln() - s + 1.0
    }
}

/// `g0 h(g / g0)` with the floor conventions for vanishing densities.
#[inline]
fn relative_integrand(g: f64, g0: f64, floor: f64) -> f64 {
    if g <= floor && g0 <= floor {
        return 0.0;
    }
    let g0 = g0.max(floor);
    if g <= 0.0 {
        g0
    } else {
        g * (g / g0).ln() - g + g0
    }
}

#[inline]
fn x_lnx(x: f64) -> f64 {
    if x > 0.0 {
        x * x.ln()
    } else {
        0.0
    }
}

/// `sum (|v|^2 / 2) f dx^2 dv^2`.
pub fn kinetic_energy(f: &Distribution) -> f64 {
    let nv2 = f.velocity.len();
    let v2: Vec<f64> = (0..nv2)
        .map(|j| {
            let [a, b] = f.velocity.velocity(j);
            0.5 * (a * a + b * b)
        })
        .collect();
    sum::blocked(&f.values, nv2, |_, b| {
        sum::pairwise_map(nv2, |j| v2[j] * b[j])
    }) * f.phase_cell()
}

/// `sigma sum f ln f dx^2 dv^2` with `0 ln 0 = 0`.
pub fn entropy(f: &Distribution, sigma: f64) -> f64 {
    let nv2 = f.velocity.len();
    sigma
        * sum::blocked(&f.values, nv2, |_, b| {
            sum::pairwise_map(nv2, |j| x_lnx(b[j]))
        })
        * f.phase_cell()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreeEnergy {
    pub kinetic: f64,
    pub potential: f64,
    pub entropy: f64,
    pub total: f64,
}

pub fn free_energy_kinetic(f: &Distribution, e: &Field, params: &PhysicsParams) -> FreeEnergy {
    let kinetic = kinetic_energy(f);
    let potential = field_energy(e, params);
    let entropy = entropy(f, params.sigma);
    FreeEnergy {
        kinetic,
        potential,
        entropy,
        total: kinetic + potential + entropy,
    }
}

/// `(1/tau) sum f |sigma grad_v ln f + v|^2 dx^2 dv^2`.
///
/// `grad_v ln f` uses fourth-order centered differences; cells whose stencil
/// reaches a value at or below the density floor are skipped.
pub fn dissipation(f: &Distribution, params: &PhysicsParams) -> f64 {
    let n = f.velocity.n();
    let nv2 = f.velocity.len();
    let dv = f.velocity.dv();
    let axis = *f.velocity.axis();
    let floor = DENSITY_FLOOR_REL * f.max().max(0.0);
    let sigma = params.sigma;
    let total: Vec<f64> = f
        .values
        .par_chunks(nv2)
        .map_init(
            || vec![0.0; nv2],
            |logs, b| {
                if b.iter().all(|x| *x <= floor) {
                    return 0.0;
                }
                for (l, x) in logs.iter_mut().zip(b) {
                    *l = if *x > floor { x.ln() } else { f64::NAN };
                }
                let d = |c: [f64; 4]| (c[0] - 8.0 * c[1] + 8.0 * c[2] - c[3]) / (12.0 * dv);
                sum::pairwise_map(nv2, |k| {
                    let (i, j) = (k / n, k % n);
                    if i < 2 || j < 2 || i + 2 >= n || j + 2 >= n || b[k] <= floor {
                        return 0.0;
                    }
                    let g1 = d([logs[k - 2 * n], logs[k - n], logs[k + n], logs[k + 2 * n]]);
                    let g2 = d([logs[k - 2], logs[k - 1], logs[k + 1], logs[k + 2]]);
                    if !(g1.is_finite() && g2.is_finite()) {
                        return 0.0;
                    }
                    let a = sigma * g1 + axis.node(i);
                    let c = sigma * g2 + axis.node(j);
                    b[k] * (a * a + c * c)
                })
            },
        )
        .collect();
    sum::pairwise(&total) * f.phase_cell() / params.tau
}

/// `sigma sum n M h(f / (n M)) dx^2 dv^2` against the discrete Maxwellian.
/// `n` must equal the velocity integral of `f`.
pub fn relative_entropy_velocity(f: &Distribution, n: &Density, m: &Maxwellian) -> Result<f64> {
    let nv2 = f.velocity.len();
    if n.values.len() * nv2 != f.values.len() || m.values.len() != nv2 {
        return Err(Error::InvalidInput(
            "grid sizes of f, n and M disagree".into(),
        ));
    }
    let dv2 = f.velocity.cell_area();
    let nmax = n.max().max(0.0);
    for (k, b) in f.values.chunks_exact(nv2).enumerate() {
        let integral = sum::pairwise(b) * dv2;
        if (integral - n.values[k]).abs() > 1e-10 * nmax.max(f64::MIN_POSITIVE) {
            return Err(Error::InvalidInput(format!(
                "n is not the velocity integral of f at node {k}: {} vs {integral}",
                n.values[k]
            )));
        }
    }
    Ok(relative_entropy_against(f, n, m))
}

/// Same integral without the consistency check (reference density `n` arbitrary).
pub fn relative_entropy_against(f: &Distribution, n: &Density, m: &Maxwellian) -> f64 {
    let nv2 = f.velocity.len();
    let floor = DENSITY_FLOOR_REL
        * f.max()
            .max(n.max() * m.values.iter().cloned().fold(0.0, f64::max));
    let total = sum::blocked(&f.values, nv2, |k, b| {
        let nk = n.values[k];
        sum::pairwise_map(nv2, |j| relative_integrand(b[j], nk * m.values[j], floor))
    });
    m.sigma * total * f.phase_cell()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModulatedEnergy {
    /// `sigma sum n h(n_eps / n) dx^2`.
    pub entropy: f64,
    /// `(eps0 / 2m) sum |E_eps - E|^2 dx^2`.
    pub field: f64,
    pub total: f64,
}

/// Modulated energy from densities and their (already solved) fields.
pub fn modulated_energy(
    n_eps: &Density,
    e_eps: &Field,
    n_limit: &Density,
    e_limit: &Field,
    params: &PhysicsParams,
) -> ModulatedEnergy {
    let floor = DENSITY_FLOOR_REL * n_eps.max().max(n_limit.max()).max(0.0);
    let entropy = params.sigma
        * sum::pairwise_map(n_eps.values.len(), |k| {
            relative_integrand(n_eps.values[k], n_limit.values[k], floor)
        })
        * n_eps.grid.cell_area();
    let field = 0.5 * params.eps0 / params.m * e_eps.squared_l2_distance(e_limit);
    ModulatedEnergy {
        entropy,
        field,
        total: entropy + field,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CkAudit {
    pub l1: f64,
    pub bound: f64,
}

impl CkAudit {
    pub fn holds(&self) -> bool {
        self.l1 <= self.bound + CK_TOL
    }
}

/// `sum |g - g0| w` and `2 max(sqrt(m0), sqrt(m)) sqrt(sum g0 h(g / g0) w)`
/// for cell weight `w`.
pub fn csiszar_kullback(g: &[f64], g0: &[f64], weight: f64) -> Result<CkAudit> {
    if g.len() != g0.len() {
        return Err(Error::InvalidInput("CK inputs differ in length".into()));
    }
    if g.iter().chain(g0).any(|v| !(*v >= 0.0)) {
        return Err(Error::InvalidInput("CK inputs must be non-negative".into()));
    }
    let m = sum::pairwise(g) * weight;
    let m0 = sum::pairwise(g0) * weight;
    if !(m > 0.0 && m0 > 0.0) {
        return Err(Error::InvalidInput(
            "CK inputs must have positive mass".into(),
        ));
    }
    let floor = DENSITY_FLOOR_REL * g.iter().chain(g0).cloned().fold(0.0, f64::max);
    let l1 = sum::pairwise_map(g.len(), |k| (g[k] - g0[k]).abs()) * weight;
    let rel = sum::pairwise_map(g.len(), |k| relative_integrand(g[k], g0[k], floor)) * weight;
    let bound = 2.0 * m.max(m0).sqrt() * rel.max(0.0).sqrt();
    Ok(CkAudit { l1, bound })
}

/// `||f - n M||_1` in phase space and the bound obtained from the velocity
/// relative entropy of `f` plus the CK bound between `n^eps` and `n`:
/// `||f - n M|| <= ||f - n^eps M|| + ||n^eps - n|| sum M dv^2`.
pub fn kinetic_vs_limit_l1(
    f: &Distribution,
    n_eps: &Density,
    n_limit: &Density,
    m: &Maxwellian,
    rel_entropy_v: f64,
) -> Result<CkAudit> {
    let nv2 = f.velocity.len();
    let l1 = sum::blocked(&f.values, nv2, |k, b| {
        let nk = n_limit.values[k];
        sum::pairwise_map(nv2, |j| (b[j] - nk * m.values[j]).abs())
    }) * f.phase_cell();
    let mass_f = f.mass();
    let mass_nm = n_eps.mass() * m.integral;
    let first =
        2.0 * mass_f.max(mass_nm).max(0.0).sqrt() * (rel_entropy_v.max(0.0) / m.sigma).sqrt();
    let second = csiszar_kullback(&n_eps.values, &n_limit.values, n_eps.grid.cell_area())?.bound
        * m.integral;
    Ok(CkAudit {
        l1,
        bound: first + second,
    })
}

/// `k[n] = sigma (1 + ln n) + (q/m) Phi`.
pub fn entropy_drive_k(n: &Density, phi: &Potential, params: &PhysicsParams) -> Result<Vec<f64>> {
    let floor = DENSITY_FLOOR_REL * n.max();
    if let Some(v) = n.values.iter().find(|v| !(**v > floor)) {
        return Err(Error::InvalidInput(format!(
            "k[n] needs n above the floor, found {v}"
        )));
    }
    let qm = params.charge_to_mass();
    Ok(n.values
        .iter()
        .zip(&phi.values)
        .map(|(nv, p)| params.sigma * (1.0 + nv.ln()) + qm * p)
        .collect())
}

/// Velocity moments of one snapshot.
#[derive(Debug, Clone)]
pub struct MomentSnapshot {
    pub t: f64,
    pub n: Density,
    pub j: Field,
    pub stress: [Vec<f64>; 3],
    pub e: Field,
}

#[derive(Debug, Clone)]
pub struct MomentResiduals {
    /// Time of the middle snapshot.
    pub t: f64,
    /// `eps dn/dt + div(j/q)`.
    pub continuity: Vec<f64>,
    /// `eps d(j/q)/dt + div S + sigma grad n - (q/m) n E - (omega_c/eps) perp(j/q) + (j/q)/tau`.
    pub momentum: [Vec<f64>; 2],
    /// `(1/omega_c) (eps d(perp j/q)/dt + perp(j/q)/tau + perp div S)`.
    pub flux: [Vec<f64>; 2],
    pub continuity_l1: f64,
    pub momentum_l1: f64,
    pub flux_l1: f64,
}

/// Periodic second-order centered derivative along axis 0 or 1.
fn centered(values: &[f64], n: usize, h: f64, axis: usize) -> Vec<f64> {
    (0..n * n)
        .map(|k| {
            let (i, j) = (k / n, k % n);
            let (p, m) = if axis == 0 {
                (((i + 1) % n) * n + j, ((i + n - 1) % n) * n + j)
            } else {
                (i * n + (j + 1) % n, i * n + (j + n - 1) % n)
            };
            (values[p] - values[m]) / (2.0 * h)
        })
        .collect()
}

fn vector_l1(v: &[Vec<f64>; 2], cell: f64) -> f64 {
    sum::pairwise_map(v[0].len(), |k| v[0][k].hypot(v[1][k])) * cell
}

/// Residuals of the continuity and momentum equations and the flux remainder
/// at the middle of the last three snapshots of `window`, using centered
/// differences in time and space.
pub fn moment_residuals(
    window: &[MomentSnapshot],
    params: &PhysicsParams,
    magnetic: &MagneticField,
) -> Result<MomentResiduals> {
    if window.len() < 3 {
        return Err(Error::InsufficientWindow {
            needed: 3,
            got: window.len(),
        });
    }
    let [a, mid, b] = [
        &window[window.len() - 3],
        &window[window.len() - 2],
        &window[window.len() - 1],
    ];
    let span = b.t - a.t;
    if !(span > 0.0) {
        return Err(Error::TimeMismatch {
            index: window.len() - 1,
            left: a.t,
            right: b.t,
        });
    }
    let g = mid.n.grid;
    let (n, h, cell) = (g.n(), g.dx(), g.cell_area());
    let (eps, q, sigma, tau) = (params.eps, params.q, params.sigma, params.tau);
    let qm = params.charge_to_mass();
    let len = g.len();

    let jq = [
        mid.j.x1.iter().map(|v| v / q).collect::<Vec<_>>(),
        mid.j.x2.iter().map(|v| v / q).collect::<Vec<_>>(),
    ];
    let dt_n: Vec<f64> = (0..len)
        .map(|k| (b.n.values[k] - a.n.values[k]) / span)
        .collect();
    let dt_j = [
        (0..len)
            .map(|k| (b.j.x1[k] - a.j.x1[k]) / (q * span))
            .collect::<Vec<_>>(),
        (0..len)
            .map(|k| (b.j.x2[k] - a.j.x2[k]) / (q * span))
            .collect::<Vec<_>>(),
    ];
    let div_j: Vec<f64> = centered(&jq[0], n, h, 0)
        .iter()
        .zip(centered(&jq[1], n, h, 1))
        .map(|(x, y)| x + y)
        .collect();
    let continuity: Vec<f64> = (0..len).map(|k| eps * dt_n[k] + div_j[k]).collect();

    let [s11, s12, s22] = &mid.stress;
    let d11 = centered(s11, n, h, 0);
    let d12_1 = centered(s12, n, h, 0);
    let d12_2 = centered(s12, n, h, 1);
    let d22 = centered(s22, n, h, 1);
    let div_s = [
        (0..len).map(|k| d11[k] + d12_2[k]).collect::<Vec<_>>(),
        (0..len).map(|k| d12_1[k] + d22[k]).collect::<Vec<_>>(),
    ];
    let grad_n = [
        centered(&mid.n.values, n, h, 0),
        centered(&mid.n.values, n, h, 1),
    ];
    let e = [&mid.e.x1, &mid.e.x2];
    // perp(w) = (w2, -w1)
    let perp = |w: &[Vec<f64>; 2], k: usize| [w[1][k], -w[0][k]];
    let mut momentum = [vec![0.0; len], vec![0.0; len]];
    let mut flux = [vec![0.0; len], vec![0.0; len]];
    for k in 0..len {
        let w = magnetic.omega_c[k];
        let pj = perp(&jq, k);
        let pdt = perp(&dt_j, k);
        let pds = perp(&div_s, k);
        for c in 0..2 {
            momentum[c][k] = eps * dt_j[c][k] + div_s[c][k] + sigma * grad_n[c][k]
                - qm * mid.n.values[k] * e[c][k]
                - (w / eps) * pj[c]
                + jq[c][k] / tau;
            flux[c][k] = (eps * pdt[c] + pj[c] / tau + pds[c]) / w;
        }
    }
    Ok(MomentResiduals {
        t: mid.t,
        continuity_l1: sum::pairwise_map(len, |k| continuity[k].abs()) * cell,
        momentum_l1: vector_l1(&momentum, cell),
        flux_l1: vector_l1(&flux, cell),
        continuity,
        momentum,
        flux,
    })
}

/// Exact CSV header of the diagnostics table.
pub const CSV_HEADER: &str = "t,mass,kinetic_energy,potential_energy,entropy,free_energy,dissipation,rel_entropy_v,modulated_energy,l1_dist,ck_bound,clipped_mass,mass_drift";

/// One row of the diagnostics table.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub mass: f64,
    pub kinetic_energy: f64,
    pub potential_energy: f64,
    pub entropy: f64,
    pub free_energy: f64,
    pub dissipation: f64,
    pub relative_entropy_velocity: f64,
    pub modulated_energy: f64,
    pub l1_kinetic_vs_limit: f64,
    pub ck_bound: f64,
    pub clipped_mass: f64,
    pub mass_drift: f64,
}

impl DiagnosticsRecord {
    pub fn values(&self) -> [f64; 13] {
        [
            self.t,
            self.mass,
            self.kinetic_energy,
            self.potential_energy,
            self.entropy,
            self.free_energy,
            self.dissipation,
            self.relative_entropy_velocity,
            self.modulated_energy,
            self.l1_kinetic_vs_limit,
            self.ck_bound,
            self.clipped_mass,
            self.mass_drift,
        ]
    }

    /// Comma-separated values in shortest round-trip form.
    pub fn csv_row(&self) -> String {
        self.values()
            .iter()
            .map(|v| format!("{v:e}"))
            .collect::<Vec<_>>()
            .join(",")
    }

    /// Checks the record invariants, including the CK inequality.
    pub fn validate(&self) -> Result<()> {
        if let Some(v) = self.values().iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "diagnostics value {v} at t = {}",
                self.t
            )));
        }
        let floor = -1e-12;
        let named = [
            ("mass", self.mass),
            ("dissipation", self.dissipation),
            ("rel_entropy_v", self.relative_entropy_velocity),
            ("modulated_energy", self.modulated_energy),
        ];
        for (name, v) in named {
            if v < floor {
                return Err(Error::InvalidInput(format!(
                    "{name} = {v} is negative at t = {}",
                    self.t
                )));
            }
        }
        if !(self.mass > 0.0) {
            return Err(Error::InvalidInput(format!(
                "mass must be positive at t = {}",
                self.t
            )));
        }
        let ck = CkAudit {
            l1: self.l1_kinetic_vs_limit,
            bound: self.ck_bound,
        };
        if !ck.holds() {
            return Err(Error::InvalidInput(format!(
                "Csiszar-Kullback inequality violated at t = {}: {} > {}",
                self.t, ck.l1, ck.bound
            )));
        }
        Ok(())
    }
}
