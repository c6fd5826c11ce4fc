//! Data generating process for the simulation experiments.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::panel::BalancedPanel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum YErrorDist {
    Gaussian,
    /// (chi2_2 - 2) / 2
    ChiSq2Centered,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum XErrorDist {
    Gaussian,
    /// sqrt(12) (U - 1/2)
    UniformScaled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RhoMode {
    Zero,
    UniformUpTo095,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Heterosked {
    Random,
    CaseALambda2,
    CaseBEx2,
}

fn d_theta0() -> [f64; 2] {
    [1.0, 1.0]
}
fn d_s2a() -> f64 {
    0.2
}
fn d_s2b() -> f64 {
    0.5
}
fn d_rho() -> f64 {
    0.5
}
fn d_pr2() -> f64 {
    0.2
}
fn d_yerr() -> YErrorDist {
    YErrorDist::ChiSq2Centered
}
fn d_xerr() -> XErrorDist {
    XErrorDist::Gaussian
}
fn d_zero() -> RhoMode {
    RhoMode::Zero
}
fn d_ar() -> RhoMode {
    RhoMode::UniformUpTo095
}
fn d_het() -> Heterosked {
    Heterosked::Random
}

/// A full scenario. Missing JSON fields take the baseline values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpConfig {
    pub n: usize,
    #[serde(rename = "T")]
    pub t: usize,
    #[serde(default = "d_theta0")]
    pub theta0: [f64; 2],
    #[serde(default = "d_s2a")]
    pub sigma2_alpha: f64,
    #[serde(default = "d_s2b")]
    pub sigma2_beta: f64,
    #[serde(default = "d_rho")]
    pub rho_alpha: f64,
    #[serde(default = "d_rho")]
    pub rho_beta: f64,
    #[serde(default = "d_pr2")]
    pub pr2: f64,
    #[serde(default = "d_yerr")]
    pub y_error_dist: YErrorDist,
    #[serde(default = "d_xerr")]
    pub x_error_dist: XErrorDist,
    #[serde(default = "d_zero")]
    pub rho_ie_mode: RhoMode,
    #[serde(default = "d_ar")]
    pub rho_ix_mode: RhoMode,
    #[serde(default)]
    pub interactive_x: bool,
    #[serde(default = "d_het")]
    pub heterosked: Heterosked,
    #[serde(default)]
    pub time_effects: bool,
    /// Calibrated when absent.
    #[serde(default)]
    pub kappa2: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

impl DgpConfig {
    /// Baseline: chi-squared y errors, Gaussian AR(1) x, PR2 = 0.2, rho = 0.5.
    pub fn baseline(n: usize, t: usize) -> Self {
        Self {
            n,
            t,
            theta0: d_theta0(),
            sigma2_alpha: 0.2,
            sigma2_beta: 0.5,
            rho_alpha: 0.5,
            rho_beta: 0.5,
            pr2: 0.2,
            y_error_dist: YErrorDist::ChiSq2Centered,
            x_error_dist: XErrorDist::Gaussian,
            rho_ie_mode: RhoMode::Zero,
            rho_ix_mode: RhoMode::UniformUpTo095,
            interactive_x: false,
            heterosked: Heterosked::Random,
            time_effects: false,
            kappa2: None,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n < 2 {
            return bad(format!("n: need at least 2 units, got {}", self.n));
        }
        if self.t < 2 {
            return bad(format!("T: need at least 2 periods, got {}", self.t));
        }
        if !(self.sigma2_alpha >= 0.0) || !(self.sigma2_beta >= 0.0) {
            return bad("sigma2_alpha, sigma2_beta: must be non-negative".into());
        }
        for (name, r) in [("rho_alpha", self.rho_alpha), ("rho_beta", self.rho_beta)] {
            if !(r >= 0.0 && r < 1.0) {
                return bad(format!("{}: must lie in [0,1), got {}", name, r));
            }
        }
        if !(self.pr2 > 0.0 && self.pr2 < 1.0) {
            return bad(format!("pr2: must lie in (0,1), got {}", self.pr2));
        }
        if let Some(k) = self.kappa2 {
            if !(k >= 0.0) || !k.is_finite() {
                return bad(format!("kappa2: must be finite and non-negative, got {}", k));
            }
        }
        Ok(())
    }

    pub fn psi_alpha(&self) -> f64 {
        self.rho_alpha * self.sigma2_alpha.sqrt()
    }
    pub fn psi_beta(&self) -> f64 {
        self.rho_beta * self.sigma2_beta.sqrt()
    }
    pub fn sigma2_eps_alpha(&self) -> f64 {
        (1.0 - self.rho_alpha * self.rho_alpha) * self.sigma2_alpha
    }
    pub fn sigma2_eps_beta(&self) -> f64 {
        (1.0 - self.rho_beta * self.rho_beta) * self.sigma2_beta
    }

    /// Excess kurtosis of the x innovations.
    pub fn gamma2(&self) -> f64 {
        match self.x_error_dist {
            XErrorDist::Gaussian => 0.0,
            XErrorDist::UniformScaled => -1.2,
        }
    }

    /// phi_t = t for t < T and phi_T = -T(T-1)/2, or zeros.
    pub fn phi(&self) -> Vec<f64> {
        let t = self.t;
        (1..=t)
            .map(|s| {
                if !self.time_effects {
                    0.0
                } else if s < t {
                    s as f64
                } else {
                    -((t * (t - 1)) as f64) / 2.0
                }
            })
            .collect()
    }
}

/// Independent random streams.
#[derive(Debug, Clone, Copy)]
#[repr(u64)]
pub enum Role {
    X = 1,
    Coef = 2,
    Y = 3,
    CalX = 4,
    CalCoef = 5,
}

/// Stream keyed by (seed, replication, role).
pub fn stream(seed: u64, rep: u64, role: Role) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((rep << 8) | role as u64);
    rng
}

pub(crate) const BURN_IN: usize = 50;

pub(crate) fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn x_innovation(rng: &mut ChaCha8Rng, dist: XErrorDist) -> f64 {
    match dist {
        XErrorDist::Gaussian => normal(rng),
        XErrorDist::UniformScaled => 12f64.sqrt() * (rng.random::<f64>() - 0.5),
    }
}

/// Common factor path for t = -49..T (f_{-50} = 0).
pub(crate) fn factor_path(rng: &mut ChaCha8Rng, t: usize) -> Vec<f64> {
    let mut f = Vec::with_capacity(BURN_IN + t);
    let mut prev = 0.0;
    let s = (1.0f64 - 0.81).sqrt();
    for _ in 0..BURN_IN + t {
        prev = 0.9 * prev + s * normal(rng);
        f.push(prev);
    }
    f
}

/// One unit's regressor path.
pub(crate) struct XUnit {
    pub x: Vec<f64>,
    /// innovations of periods 1..T
    pub ex: Vec<f64>,
    pub sigma_x: f64,
    pub lambda: f64,
}

pub(crate) fn draw_x_unit(rng: &mut ChaCha8Rng, cfg: &DgpConfig, f: Option<&[f64]>) -> XUnit {
    let t = cfg.t;
    let alpha_x = 1.0 + normal(rng);
    let z = normal(rng);
    let sigma_x = (0.5 * (1.0 + z * z)).sqrt();
    let rho = match cfg.rho_ix_mode {
        RhoMode::Zero => 0.0,
        RhoMode::UniformUpTo095 => 0.95 * rng.random::<f64>(),
    };
    let gamma = if cfg.interactive_x { 2.0 * rng.random::<f64>() } else { 0.0 };
    let s = (1.0 - rho * rho).sqrt() * sigma_x;
    let mut prev = 0.0;
    let mut x = Vec::with_capacity(t);
    let mut ex = Vec::with_capacity(t);
    for j in 0..BURN_IN + t {
        let e = x_innovation(rng, cfg.x_error_dist);
        let fj = f.map_or(0.0, |f| f[j]);
        prev = alpha_x * (1.0 - rho) + gamma * fj + rho * prev + s * e;
        if j >= BURN_IN {
            x.push(prev);
            ex.push(e);
        }
    }
    let lambda = standardized_lambda(&ex, cfg.gamma2());
    XUnit { x, ex, sigma_x, lambda }
}

/// (e'M_T e - (T-1)) / sqrt(2(T-1) + gamma2 (T-1)^2 / T).
pub fn standardized_lambda(e: &[f64], gamma2: f64) -> f64 {
    let t = e.len() as f64;
    let m = e.iter().sum::<f64>() / t;
    let q: f64 = e.iter().map(|v| (v - m) * (v - m)).sum();
    (q - (t - 1.0)) / (2.0 * (t - 1.0) + gamma2 * (t - 1.0) * (t - 1.0) / t).sqrt()
}

/// (alpha_i, beta_i) given lambda_i.
pub(crate) fn draw_theta(rng: &mut ChaCha8Rng, cfg: &DgpConfig, lambda: f64) -> (f64, f64) {
    let ea = cfg.sigma2_eps_alpha().sqrt() * normal(rng);
    let eb = cfg.sigma2_eps_beta().sqrt() * normal(rng);
    (cfg.theta0[0] + cfg.psi_alpha() * lambda + ea, cfg.theta0[1] + cfg.psi_beta() * lambda + eb)
}

/// True values behind a generated panel.
#[derive(Debug, Clone)]
pub struct Truth {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub lambda: Vec<f64>,
    pub sigma_x: Vec<f64>,
    pub phi: Vec<f64>,
}

/// Replication `rep` of the scenario; `kappa2` overrides the configured value.
pub fn generate_replication(cfg: &DgpConfig, rep: u64) -> Result<(BalancedPanel, Truth)> {
    cfg.validate()?;
    let kappa2 = cfg.kappa2.ok_or_else(|| Error::InvalidConfig("kappa2: not calibrated".into()))?;
    let kappa = kappa2.sqrt();
    let (n, t) = (cfg.n, cfg.t);
    let mut rx = stream(cfg.seed, rep, Role::X);
    let mut rc = stream(cfg.seed, rep, Role::Coef);
    let mut ry = stream(cfg.seed, rep, Role::Y);
    let f = if cfg.interactive_x { Some(factor_path(&mut rx, t)) } else { None };
    let phi = cfg.phi();
    let mut y = Mat::zeros(n, t);
    let mut xs = Vec::with_capacity(n);
    let mut truth = Truth {
        alpha: Vec::with_capacity(n),
        beta: Vec::with_capacity(n),
        lambda: Vec::with_capacity(n),
        sigma_x: Vec::with_capacity(n),
        phi: phi.clone(),
    };
    for i in 0..n {
        let xu = draw_x_unit(&mut rx, cfg, f.as_deref());
        let (a, b) = draw_theta(&mut rc, cfg, xu.lambda);
        let z = normal(&mut ry);
        let sig_rand = (0.5 * (1.0 + z * z)).sqrt();
        let rho_e = match cfg.rho_ie_mode {
            RhoMode::Zero => 0.0,
            RhoMode::UniformUpTo095 => 0.95 * ry.random::<f64>(),
        };
        let mut e_prev = if cfg.rho_ie_mode == RhoMode::UniformUpTo095 { normal(&mut ry) } else { 0.0 };
        let se = (1.0 - rho_e * rho_e).sqrt();
        for s in 0..t {
            let vs = match cfg.y_error_dist {
                YErrorDist::Gaussian => normal(&mut ry),
                YErrorDist::ChiSq2Centered => {
                    let g1 = normal(&mut ry);
                    let g2 = normal(&mut ry);
                    0.5 * (g1 * g1 + g2 * g2 - 2.0)
                }
            };
            let e = rho_e * e_prev + se * vs;
            e_prev = e;
            let sig = match cfg.heterosked {
                Heterosked::Random => sig_rand,
                Heterosked::CaseALambda2 => xu.lambda.abs(),
                Heterosked::CaseBEx2 => xu.ex[s].abs(),
            };
            y[(i, s)] = a + phi[s] + b * xu.x[s] + kappa * sig * e;
        }
        truth.alpha.push(a);
        truth.beta.push(b);
        truth.lambda.push(xu.lambda);
        truth.sigma_x.push(xu.sigma_x);
        xs.push(Mat::from_column_slice(t, 1, &xu.x));
    }
    Ok((BalancedPanel::new(y, xs)?, truth))
}
