//! Replication runner and metric aggregation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::calibrate::{calibrate_kappa, N_CAL, R_KAPPA};
use super::dgp::{generate_replication, DgpConfig};
use crate::error::{Error, Result};
use crate::estimators::{fe, gp, mg, tmg, Estimate};
use crate::hausman::{hausman_no_te, hausman_te};
use crate::panel::BalancedPanel;
use crate::time_effects::{fete, gp_te, tmg_te, TimeEffects};
use crate::trimming::TrimConfig;

/// Two-sided 5% normal critical value.
pub const Z_CRIT: f64 = 1.959964;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EstimatorSpec {
    Fe,
    Mg,
    Tmg { alpha: f64 },
    Gp { alpha_gp: f64 },
    Fete,
    Tmgte { alpha: f64 },
    Gpte { alpha_gp: f64 },
    Hausman { alpha: f64 },
    HausmanTe { alpha: f64 },
}

impl EstimatorSpec {
    pub fn tag(&self) -> &'static str {
        match self {
            EstimatorSpec::Fe => "fe",
            EstimatorSpec::Mg => "mg",
            EstimatorSpec::Tmg { .. } => "tmg",
            EstimatorSpec::Gp { .. } => "gp",
            EstimatorSpec::Fete => "fete",
            EstimatorSpec::Tmgte { .. } => "tmgte",
            EstimatorSpec::Gpte { .. } => "gpte",
            EstimatorSpec::Hausman { .. } => "hausman",
            EstimatorSpec::HausmanTe { .. } => "hausman_te",
        }
    }

    pub fn alpha(&self) -> Option<f64> {
        match *self {
            EstimatorSpec::Tmg { alpha }
            | EstimatorSpec::Tmgte { alpha }
            | EstimatorSpec::Hausman { alpha }
            | EstimatorSpec::HausmanTe { alpha } => Some(alpha),
            EstimatorSpec::Gp { alpha_gp } | EstimatorSpec::Gpte { alpha_gp } => Some(alpha_gp),
            _ => None,
        }
    }

    fn is_test(&self) -> bool {
        matches!(self, EstimatorSpec::Hausman { .. } | EstimatorSpec::HausmanTe { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerPoint {
    pub b0: f64,
    pub rejection_rate: f64,
    pub mc_se: f64,
}

/// Metrics for one (estimator, parameter) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McResult {
    pub estimator: String,
    pub alpha: Option<f64>,
    pub param: String,
    pub truth: Option<f64>,
    pub reps: usize,
    pub failures: usize,
    pub bias: Option<f64>,
    pub rmse: Option<f64>,
    /// Rejection frequency at the 5% level.
    pub size: f64,
    pub pi_hat: Option<f64>,
    pub mc_se_bias: Option<f64>,
    pub mc_se_size: f64,
    pub power_curve: Option<Vec<PowerPoint>>,
}

#[derive(Debug, Clone)]
enum RepOut {
    Coef { vals: Vec<(f64, f64)>, pi: f64 },
    Test { reject: bool },
    Failed,
}

fn coef_vals(e: &Estimate, te: Option<&TimeEffects>) -> Vec<(f64, f64)> {
    let b = e.beta();
    let se = e.se();
    let off = e.coef.len() - b.len();
    let mut v = vec![(b[0], se[off])];
    if let Some(te) = te {
        let s = te.se();
        v.extend(te.phi.iter().zip(s.iter()).map(|(p, q)| (*p, *q)));
    }
    v
}

fn run_one(spec: &EstimatorSpec, p: &BalancedPanel) -> RepOut {
    let r: Result<RepOut> = (|| {
        Ok(match *spec {
            EstimatorSpec::Fe => {
                let e = fe(p)?;
                RepOut::Coef { vals: coef_vals(&e, None), pi: e.pi_n }
            }
            EstimatorSpec::Mg => {
                let e = mg(p)?;
                RepOut::Coef { vals: coef_vals(&e, None), pi: 0.0 }
            }
            EstimatorSpec::Tmg { alpha } => {
                let e = tmg(p, &TrimConfig::with_alpha(alpha))?;
                RepOut::Coef { vals: coef_vals(&e, None), pi: e.pi_n }
            }
            EstimatorSpec::Gp { alpha_gp } => {
                let e = gp(p, alpha_gp)?;
                RepOut::Coef { vals: coef_vals(&e, None), pi: e.pi_n }
            }
            EstimatorSpec::Fete => {
                let (e, te) = fete(p)?;
                RepOut::Coef { vals: coef_vals(&e, Some(&te)), pi: 0.0 }
            }
            EstimatorSpec::Tmgte { alpha } => {
                let (e, te) = tmg_te(p, &TrimConfig::with_alpha(alpha))?;
                RepOut::Coef { vals: coef_vals(&e, Some(&te)), pi: e.pi_n }
            }
            EstimatorSpec::Gpte { alpha_gp } => {
                let (e, te) = gp_te(p, alpha_gp)?;
                RepOut::Coef { vals: coef_vals(&e, Some(&te)), pi: e.pi_n }
            }
            EstimatorSpec::Hausman { alpha } => {
                let h = hausman_no_te(p, &TrimConfig::with_alpha(alpha))?;
                RepOut::Test { reject: h.p_value < 0.05 }
            }
            EstimatorSpec::HausmanTe { alpha } => {
                let h = hausman_te(p, &TrimConfig::with_alpha(alpha))?;
                RepOut::Test { reject: h.p_value < 0.05 }
            }
        })
    })();
    r.unwrap_or(RepOut::Failed)
}

/// Fill in kappa^2 by calibration when the scenario leaves it open.
pub fn resolve_kappa(cfg: &DgpConfig) -> Result<DgpConfig> {
    let mut c = cfg.clone();
    if c.kappa2.is_none() {
        c.kappa2 = Some(calibrate_kappa(cfg, R_KAPPA, N_CAL)?);
    }
    Ok(c)
}

/// Run `reps` replications; `jobs` fixes the worker count (results do not depend on it).
pub fn run_experiment(
    cfg: &DgpConfig,
    estimators: &[EstimatorSpec],
    reps: usize,
    beta0_grid: Option<&[f64]>,
    jobs: Option<usize>,
) -> Result<Vec<McResult>> {
    if reps == 0 {
        return Err(Error::InvalidConfig("reps: must be at least 1".into()));
    }
    let work = || -> Result<Vec<McResult>> {
        let cfg = resolve_kappa(cfg)?;
        cfg.validate()?;
        let outs: Vec<Vec<RepOut>> = (0..reps as u64)
            .into_par_iter()
            .map(|r| match generate_replication(&cfg, r) {
                Ok((p, _)) => estimators.iter().map(|s| run_one(s, &p)).collect(),
                Err(_) => vec![RepOut::Failed; estimators.len()],
            })
            .collect();
        Ok(aggregate(&cfg, estimators, &outs, beta0_grid))
    };
    match jobs {
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build()
            .map_err(|e| Error::InvalidConfig(format!("jobs: {}", e)))?
            .install(work),
        None => work(),
    }
}

/// Default power grid: 21 points over b0 +/- 0.5.
pub fn default_grid(beta0: f64) -> Vec<f64> {
    (0..21).map(|j| beta0 - 0.5 + 0.05 * j as f64).collect()
}

fn aggregate(cfg: &DgpConfig, specs: &[EstimatorSpec], outs: &[Vec<RepOut>], grid: Option<&[f64]>) -> Vec<McResult> {
    let beta0 = cfg.theta0[1];
    let phi = cfg.phi();
    let mut res = Vec::new();
    for (j, spec) in specs.iter().enumerate() {
        let col: Vec<&RepOut> = outs.iter().map(|o| &o[j]).collect();
        let failures = col.iter().filter(|o| matches!(o, RepOut::Failed)).count();
        if spec.is_test() {
            let rej: Vec<bool> = col.iter().filter_map(|o| if let RepOut::Test { reject } = o { Some(*reject) } else { None }).collect();
            let m = rej.len();
            let size = if m > 0 { rej.iter().filter(|b| **b).count() as f64 / m as f64 } else { f64::NAN };
            res.push(McResult {
                estimator: spec.tag().into(),
                alpha: spec.alpha(),
                param: "test".into(),
                truth: None,
                reps: m,
                failures,
                bias: None,
                rmse: None,
                size,
                pi_hat: None,
                mc_se_bias: None,
                mc_se_size: (size * (1.0 - size) / m.max(1) as f64).sqrt(),
                power_curve: None,
            });
            continue;
        }
        let ok: Vec<(&Vec<(f64, f64)>, f64)> =
            col.iter().filter_map(|o| if let RepOut::Coef { vals, pi } = o { Some((vals, *pi)) } else { None }).collect();
        let m = ok.len();
        let nparams = ok.first().map_or(1, |v| v.0.len());
        let pi_hat = if m > 0 { Some(ok.iter().map(|v| v.1).sum::<f64>() / m as f64) } else { None };
        for q in 0..nparams {
            let (name, truth) = if q == 0 { ("beta".to_string(), beta0) } else { (format!("phi{}", q), phi[q - 1]) };
            let err: Vec<f64> = ok.iter().map(|v| v.0[q].0 - truth).collect();
            let mf = m.max(1) as f64;
            let bias = err.iter().sum::<f64>() / mf;
            let rmse = (err.iter().map(|e| e * e).sum::<f64>() / mf).sqrt();
            let sd = if m > 1 { (err.iter().map(|e| (e - bias).powi(2)).sum::<f64>() / (mf - 1.0)).sqrt() } else { 0.0 };
            let rate = |b: f64| -> f64 { ok.iter().filter(|v| ((v.0[q].0 - b) / v.0[q].1).abs() > Z_CRIT).count() as f64 / mf };
            let size = rate(truth);
            let power_curve = if q == 0 {
                grid.map(|g| {
                    g.iter()
                        .map(|&b| {
                            let r = rate(b);
                            PowerPoint { b0: b, rejection_rate: r, mc_se: (r * (1.0 - r) / mf).sqrt() }
                        })
                        .collect()
                })
            } else {
                None
            };
            res.push(McResult {
                estimator: spec.tag().into(),
                alpha: spec.alpha(),
                param: name,
                truth: Some(truth),
                reps: m,
                failures,
                bias: Some(bias),
                rmse: Some(rmse),
                size,
                pi_hat,
                mc_se_bias: Some(sd / mf.sqrt()),
                mc_se_size: (size * (1.0 - size) / mf).sqrt(),
                power_curve,
            });
        }
    }
    res
}

/// Find a row by estimator tag, parameter and alpha.
pub fn find<'a>(rows: &'a [McResult], estimator: &str, param: &str) -> Option<&'a McResult> {
    rows.iter().find(|r| r.estimator == estimator && r.param == param)
}
