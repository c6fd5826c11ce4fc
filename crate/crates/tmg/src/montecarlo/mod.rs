//! Simulation design, kappa calibration and the replication runner.

pub mod calibrate;
pub mod dgp;
pub mod runner;

pub use calibrate::{calibrate_kappa, N_CAL, R_KAPPA};
pub use dgp::{
    generate_replication, standardized_lambda, stream, DgpConfig, Heterosked, RhoMode, Role, Truth, XErrorDist,
    YErrorDist,
};
pub use runner::{default_grid, find, resolve_kappa, run_experiment, EstimatorSpec, McResult, PowerPoint, Z_CRIT};
