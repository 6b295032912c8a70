//! External magnetic field amplitude `B(x)` and the cyclotron frequency.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::spectral_gradient;
use crate::grid::{PhysicsParams, SpatialGrid};

/// Admissible magnetic profiles. The field direction is fixed along `e_3`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MagneticSpec {
    Uniform {
        b0: f64,
    },
    /// `B(x) = b0 (1 + amplitude exp(-|x|^2 / width^2))`.
    Bump {
        b0: f64,
        amplitude: f64,
        width: f64,
    },
}

impl MagneticSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            MagneticSpec::Uniform { b0 } => {
                if !(b0.is_finite() && b0 > 0.0) {
                    return Err(Error::InvalidMagnetic(format!(
                        "uniform field needs b0 > 0, got {b0}"
                    )));
                }
            }
            MagneticSpec::Bump {
                b0,
                amplitude,
                width,
            } => {
                if !(b0.is_finite() && b0 > 0.0) {
                    return Err(Error::InvalidMagnetic(format!(
                        "bump needs b0 > 0, got {b0}"
                    )));
                }
                if !(amplitude.is_finite() && amplitude > -1.0) {
                    return Err(Error::InvalidMagnetic(format!(
                        "bump amplitude must exceed -1 so that inf B > 0, got {amplitude}"
                    )));
                }
                if !(width.is_finite() && width > 0.0) {
                    return Err(Error::InvalidMagnetic(format!(
                        "bump width must be positive, got {width}"
                    )));
                }
            }
        }
        Ok(())
    }

    #[inline]
    pub fn value(&self, x1: f64, x2: f64) -> f64 {
        match *self {
            MagneticSpec::Uniform { b0 } => b0,
            MagneticSpec::Bump {
                b0,
                amplitude,
                width,
            } => b0 * (1.0 + amplitude * (-(x1 * x1 + x2 * x2) / (width * width)).exp()),
        }
    }

    /// Analytic `grad B`.
    #[inline]
    pub fn gradient(&self, x1: f64, x2: f64) -> [f64; 2] {
        match *self {
            MagneticSpec::Uniform { .. } => [0.0, 0.0],
            MagneticSpec::Bump {
                b0,
                amplitude,
                width,
            } => {
                let w2 = width * width;
                let g = -2.0 * b0 * amplitude * (-(x1 * x1 + x2 * x2) / w2).exp() / w2;
                [g * x1, g * x2]
            }
        }
    }

    pub fn is_uniform(&self) -> bool {
        matches!(self, MagneticSpec::Uniform { .. })
    }
}

/// `B`, `omega_c = qB/m` and `grad omega_c` sampled on the spatial grid.
#[derive(Debug, Clone)]
pub struct MagneticField {
    pub spec: MagneticSpec,
    pub grid: SpatialGrid,
    pub b: Vec<f64>,
    pub omega_c: Vec<f64>,
    /// Spectral gradient of the sampled `omega_c`.
    pub grad_omega_c: [Vec<f64>; 2],
    pub b_min: f64,
    pub omega_max: f64,
    pub charge_to_mass: f64,
}

impl MagneticField {
    #[inline]
    pub fn b_at(&self, x1: f64, x2: f64) -> f64 {
        self.spec.value(x1, x2)
    }
}

pub fn eval_magnetic(
    spec: &MagneticSpec,
    grid: &SpatialGrid,
    params: &PhysicsParams,
) -> Result<MagneticField> {
    spec.validate()?;
    params.validate()?;
    let b = grid.sample(|x1, x2| spec.value(x1, x2));
    let b_min = b.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(b_min > 0.0) {
        return Err(Error::InvalidMagnetic(format!(
            "min B on grid is {b_min}, must be > 0"
        )));
    }
    let qm = params.charge_to_mass();
    let omega_c: Vec<f64> = b.iter().map(|v| qm * v).collect();
    let omega_max = omega_c.iter().cloned().fold(0.0, f64::max);
    let grad_omega_c = if spec.is_uniform() {
        [vec![0.0; grid.len()], vec![0.0; grid.len()]]
    } else {
        spectral_gradient(&omega_c, grid.n(), grid.dx())
    };
    Ok(MagneticField {
        spec: *spec,
        grid: *grid,
        b,
        omega_c,
        grad_omega_c,
        b_min,
        omega_max,
        charge_to_mass: qm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_field() {
        let g = SpatialGrid::new(8.0, 16).unwrap();
        let m = eval_magnetic(
            &MagneticSpec::Uniform { b0: 2.0 },
            &g,
            &PhysicsParams::default(),
        )
        .unwrap();
        assert!(m.omega_c.iter().all(|w| *w == 2.0));
        assert!(m.grad_omega_c[0]
            .iter()
            .chain(&m.grad_omega_c[1])
            .all(|g| *g == 0.0));
        assert_eq!(m.b_min, 2.0);
    }

    #[test]
    fn bump_value_at_origin() {
        let spec = MagneticSpec::Bump {
            b0: 1.0,
            amplitude: 0.5,
            width: 2.0,
        };
        assert_eq!(spec.value(0.0, 0.0), 1.5);
    }

    #[test]
    fn bump_gradient_matches_analytic() {
        let g = SpatialGrid::new(8.0, 128).unwrap();
        let spec = MagneticSpec::Bump {
            b0: 1.0,
            amplitude: 0.5,
            width: 2.0,
        };
        let params = PhysicsParams {
            q: 2.0,
            ..PhysicsParams::default()
        };
        let m = eval_magnetic(&spec, &g, &params).unwrap();
        let mut worst: f64 = 0.0;
        for k in 0..g.len() {
            let [x1, x2] = g.position(k);
            let [a1, a2] = spec.gradient(x1, x2);
            worst = worst
                .max((m.grad_omega_c[0][k] - 2.0 * a1).abs())
                .max((m.grad_omega_c[1][k] - 2.0 * a2).abs());
        }
        assert!(worst < 1e-6, "max gradient error {worst}");
    }

    #[test]
    fn rejects_nonpositive_fields() {
        let g = SpatialGrid::new(8.0, 16).unwrap();
        let p = PhysicsParams::default();
        assert!(eval_magnetic(&MagneticSpec::Uniform { b0: 0.0 }, &g, &p).is_err());
        let spec = MagneticSpec::Bump {
            b0: 1.0,
            amplitude: -1.0,
            width: 1.0,
        };
        assert!(eval_magnetic(&spec, &g, &p).is_err());
    }
}
