//! Strongly magnetized 2D Vlasov-Poisson-Fokker-Planck simulation, its
//! guiding-center drift limit, and the functionals used to compare them.

pub mod diagnostics;
pub mod error;
pub mod fft;
pub mod fields;
pub mod grid;
pub mod guiding_center;
pub mod harness;
pub mod kinetic;
pub mod magnetic;
pub mod poisson;
pub mod spline;
pub mod sum;

pub use error::{Error, Result};
pub use fields::{
    maxwellian, neutral_background, Density, DensityRole, Distribution, Field, Maxwellian,
    Potential,
};
pub use grid::{make_grids, PhysicsParams, SpatialGrid, VelocityGrid};
pub use magnetic::{eval_magnetic, MagneticField, MagneticSpec};
pub use poisson::{field_energy, PoissonSolver};
