//! Trimmed mean group estimation for short-T heterogeneous panels.
//!
//! Estimators (FE, MG, TMG, GP and their time-effects variants), Hausman
//! tests of correlated heterogeneity, and a Monte Carlo engine.

pub mod cli;
pub mod error;
pub mod estimators;
pub mod hausman;
pub mod linalg;
pub mod montecarlo;
pub mod panel;
pub mod time_effects;
pub mod trimming;

pub use error::{Error, Result};
pub use estimators::{efficiency_diagnostics, fe, gp, mg, tmg, EfficiencyDiagnostics, Estimate, Method};
pub use hausman::{chisq_sf, hausman_no_te, hausman_te, HausmanResult, HausmanVariant};
pub use panel::{build_unit_design, load_panel, read_csv, unit_ols, BalancedPanel, Row, UnitDesign};
pub use time_effects::{chamberlain_phi, fete, gp_te, tmg_te, ChamberlainProjector, TeMethod, TimeEffects};
pub use trimming::{compute_threshold, delta_weights, trimmed_unit_estimate, CnRule, TrimConfig, TrimState};
