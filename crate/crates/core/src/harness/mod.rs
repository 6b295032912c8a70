//! Configuration, experiment drivers and on-disk artifacts.

pub mod config;
pub mod drivers;
pub mod fieldio;

pub use config::{load_config, GridConfig, InitialSpec, Mode, RunConfig};
pub use drivers::{
    compare_dirs, compare_trajectories, run, sweep, ComparisonRow, KineticRun, LimitRun, Reporter,
    RunOutcome, Scenario, StoredTrajectory, SweepReport, SweepRow,
};
pub use fieldio::{dump_field, load_field, FieldFile};
