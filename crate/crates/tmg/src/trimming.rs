//! Determinant-based trimming.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::panel::UnitDesign;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CnRule {
    /// C_n equals the mean determinant.
    MeanDeterminant,
    Explicit(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrimConfig {
    pub alpha: f64,
    pub c_n_rule: CnRule,
}

impl Default for TrimConfig {
    fn default() -> Self {
        Self { alpha: 1.0 / 3.0, c_n_rule: CnRule::MeanDeterminant }
    }
}

impl TrimConfig {
    pub fn with_alpha(alpha: f64) -> Self {
        Self { alpha, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidConfig(format!("alpha must lie in (0,1), got {}", self.alpha)));
        }
        if let CnRule::Explicit(c) = self.c_n_rule {
            if !(c > 0.0) {
                return Err(Error::InvalidConfig(format!("explicit C_n must be positive, got {}", c)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrimState {
    pub a_n: f64,
    pub delta: Vec<f64>,
    pub delta_bar: f64,
    pub pi_n: f64,
    pub trimmed: Vec<bool>,
}

impl TrimState {
    /// Normalized weights (1 + delta_i) / (n (1 + delta_bar)).
    pub fn weights(&self) -> Vec<f64> {
        let n = self.delta.len() as f64;
        self.delta.iter().map(|d| (1.0 + d) / (n * (1.0 + self.delta_bar))).collect()
    }
}

/// a_n = C_n n^{-alpha}.
pub fn compute_threshold(d: &[f64], cfg: &TrimConfig) -> Result<f64> {
    cfg.validate()?;
    let n = d.len();
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let c_n = match cfg.c_n_rule {
        CnRule::MeanDeterminant => {
            if d.iter().all(|v| *v <= 0.0) {
                return Err(Error::AllSingular);
            }
            d.iter().sum::<f64>() / n as f64
        }
        CnRule::Explicit(c) => c,
    };
    Ok(c_n * (n as f64).powf(-cfg.alpha))
}

/// delta_i = ((d_i - a_n)/a_n) 1{d_i <= a_n}.
pub fn delta_weights(d: &[f64], a_n: f64) -> TrimState {
    let trimmed: Vec<bool> = d.iter().map(|&di| di <= a_n).collect();
    let delta: Vec<f64> = d
        .iter()
        .zip(&trimmed)
        .map(|(&di, &tr)| if tr { (di.max(0.0) - a_n) / a_n } else { 0.0 })
        .collect();
    let n = d.len() as f64;
    let delta_bar = delta.iter().sum::<f64>() / n;
    let pi_n = trimmed.iter().filter(|b| **b).count() as f64 / n;
    TrimState { a_n, delta, delta_bar, pi_n, trimmed }
}

/// theta~_i: OLS above the threshold, a_n^{-1} adj W'y at or below it.
pub fn trimmed_unit_estimate(design: &UnitDesign, y: &Vector, a_n: f64) -> Vector {
    design.trimmed_estimate(y, a_n)
}

/// Threshold and weights from a set of designs.
pub fn trim_designs(designs: &[UnitDesign], cfg: &TrimConfig) -> Result<TrimState> {
    let d: Vec<f64> = designs.iter().map(|u| u.d).collect();
    let a_n = compute_threshold(&d, cfg)?;
    Ok(delta_weights(&d, a_n))
}
