//! Common time effects: Chamberlain projection for T > k, system solve for T = k,
//! two-way FE, and the TMG-TE estimator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{gp_from_keep, gp_keep, tmg_from_rows, trimmed_rows, Estimate, Method};
use crate::linalg::{demean, inv_checked, sym_pinv, symmetrize, within_matrix, Mat, Vector};
use crate::panel::{BalancedPanel, UnitDesign};
use crate::trimming::{trim_designs, TrimConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TeMethod {
    Chamberlain,
    SystemSolve,
    FeTe,
    /// Near-stayer average used with the GP estimator at T = k.
    Stayers,
}

#[derive(Debug, Clone)]
pub struct TimeEffects {
    pub phi: Vector,
    pub cov: Mat,
    pub method: TeMethod,
}

impl TimeEffects {
    pub fn se(&self) -> Vector {
        self.cov.diagonal().map(|v| v.max(0.0).sqrt())
    }
}

/// Per-unit M_i = I - M_T X_i Psi^{-1} X_i' M_T and their average.
#[derive(Debug, Clone)]
pub struct ChamberlainProjector {
    pub m: Vec<Mat>,
    pub m_bar: Mat,
}

impl ChamberlainProjector {
    pub fn new(panel: &BalancedPanel) -> Self {
        let t = panel.t();
        let m: Vec<Mat> = panel
            .designs()
            .iter()
            .map(|u| {
                let pinv = inv_checked(&u.psi_x).unwrap_or_else(|| sym_pinv(&u.psi_x, 1e-12).0);
                Mat::identity(t, t) - &u.xd * pinv * u.xd.transpose()
            })
            .collect();
        let mut m_bar = Mat::zeros(t, t);
        for mi in &m {
            m_bar += mi;
        }
        m_bar /= panel.n() as f64;
        Self { m, m_bar }
    }
}

/// Q_i = (1 + delta_i) W_i (W_i'W_i)^{-1}.
pub(crate) fn q_matrix(u: &UnitDesign, a_n: f64) -> Mat {
    &u.w * u.scaled_inverse(a_n)
}

/// phi_C with its covariance; also returns the projector for reuse.
pub(crate) fn chamberlain_full(panel: &BalancedPanel) -> Result<(TimeEffects, ChamberlainProjector, Mat)> {
    if panel.t() <= panel.k() {
        return Err(Error::RequiresTGreaterK);
    }
    let n = panel.n() as f64;
    let t = panel.t();
    let proj = ChamberlainProjector::new(panel);
    let mb_inv = inv_checked(&proj.m_bar).ok_or(Error::SingularMbar)?;
    let mut rhs = Vector::zeros(t);
    for (i, mi) in proj.m.iter().enumerate() {
        rhs += mi * demean(&panel.y_unit(i));
    }
    let phi = &mb_inv * (rhs / n);
    let mut meat = Mat::zeros(t, t);
    for (i, mi) in proj.m.iter().enumerate() {
        let v = mi * demean(&(panel.y_unit(i) - &phi));
        meat += &v * v.transpose();
    }
    let cov = symmetrize(&(&mb_inv * (meat / n) * &mb_inv / n));
    Ok((TimeEffects { phi, cov, method: TeMethod::Chamberlain }, proj, mb_inv))
}

/// Chamberlain estimator of the time effects (T > k).
pub fn chamberlain_phi(panel: &BalancedPanel) -> Result<TimeEffects> {
    chamberlain_full(panel).map(|r| r.0)
}

/// Pieces of the two-way FE fit reused by the Hausman test.
pub(crate) struct FeteParts {
    pub psi_inv: Mat,
    pub xbar: Mat,
    pub ybar: Vector,
}

pub(crate) fn fete_full(panel: &BalancedPanel) -> Result<(Estimate, TimeEffects, FeteParts)> {
    let n = panel.n() as f64;
    let kp = panel.k_prime();
    let (ybar, xbar) = panel.cross_means();
    let xc: Vec<Mat> = (0..panel.n()).map(|i| crate::linalg::demean_cols(&(panel.x_unit(i) - &xbar))).collect();
    let yc: Vec<Vector> = (0..panel.n()).map(|i| demean(&(panel.y_unit(i) - &ybar))).collect();
    let mut psi = Mat::zeros(kp, kp);
    let mut r = Vector::zeros(kp);
    for (x, y) in xc.iter().zip(&yc) {
        psi += x.transpose() * x;
        r += x.transpose() * y;
    }
    psi /= n;
    r /= n;
    let psi_inv = inv_checked(&psi).ok_or(Error::SingularPooledGram)?;
    let beta = &psi_inv * r;
    let mut meat = Mat::zeros(kp, kp);
    for (x, y) in xc.iter().zip(&yc) {
        let s = x.transpose() * (y - x * &beta);
        meat += &s * s.transpose();
    }
    let cov = symmetrize(&(&psi_inv * (meat / (n * n)) * &psi_inv));
    let phi = demean(&(&ybar - &xbar * &beta));
    let phi_cov = combined_phi_cov(panel, &xbar, &cov, &beta, &phi);
    let est = Estimate {
        method: Method::FeTe,
        coef: beta,
        cov,
        has_intercept: false,
        n_used: panel.n(),
        pi_n: 0.0,
        alpha_used: None,
        per_unit: None,
    };
    Ok((est, TimeEffects { phi, cov: phi_cov, method: TeMethod::FeTe }, FeteParts { psi_inv, xbar, ybar }))
}

/// Two-way fixed effects estimator.
pub fn fete(panel: &BalancedPanel) -> Result<(Estimate, TimeEffects)> {
    fete_full(panel).map(|(e, p, _)| (e, p))
}

/// M_T [Xbar Var(beta) Xbar' + Omega_nu / n] M_T.
fn combined_phi_cov(panel: &BalancedPanel, xbar: &Mat, var_beta: &Mat, beta: &Vector, phi: &Vector) -> Mat {
    let n = panel.n() as f64;
    let t = panel.t();
    let mut omega = Mat::zeros(t, t);
    for i in 0..panel.n() {
        let v = panel.y_unit(i) - panel.x_unit(i) * beta - phi;
        omega += &v * v.transpose();
    }
    omega /= n - 1.0;
    let mt = within_matrix(t);
    symmetrize(&(&mt * (xbar * var_beta * xbar.transpose() + omega / n) * &mt))
}

/// Extra quantities of the TMG-TE fit reused by the Hausman test.
pub(crate) struct TmgTeParts {
    pub a_n: f64,
    pub delta_bar: f64,
    /// (I - Qbar_x' M_T Xbar)^{-1}, only for T = k.
    pub sys_inv_x: Option<Mat>,
    pub projector: Option<(ChamberlainProjector, Mat)>,
}

pub(crate) fn tmg_te_full(panel: &BalancedPanel, cfg: &TrimConfig) -> Result<(Estimate, TimeEffects, TmgTeParts)> {
    let des = panel.designs();
    let st = trim_designs(des, cfg)?;
    if st.pi_n >= 1.0 {
        return Err(Error::AllTrimmed);
    }
    let n = panel.n() as f64;
    let t = panel.t();
    let k = panel.k();
    let scale = 1.0 + st.delta_bar;
    let mut qbar = Mat::zeros(t, k);
    for u in des {
        qbar += q_matrix(u, st.a_n);
    }
    qbar /= n * scale;

    if t > k {
        let (te, proj, mb_inv) = chamberlain_full(panel)?;
        let rows = trimmed_rows(panel, &st, |i| panel.y_unit(i) - &te.phi);
        let (coef, cov0) = tmg_from_rows(&rows, &st);
        let cov = symmetrize(&(cov0 + qbar.transpose() * &te.cov * &qbar));
        let est = Estimate {
            method: Method::TmgTe,
            coef,
            cov,
            has_intercept: true,
            n_used: panel.n(),
            pi_n: st.pi_n,
            alpha_used: Some(cfg.alpha),
            per_unit: Some(Mat::from_fn(rows.len(), k, |i, j| rows[i][j])),
        };
        let parts = TmgTeParts {
            a_n: st.a_n,
            delta_bar: st.delta_bar,
            sys_inv_x: None,
            projector: Some((proj, mb_inv)),
        };
        return Ok((est, te, parts));
    }

    // T = k: solve the joint system for theta and phi.
    let rows = trimmed_rows(panel, &st, |i| panel.y_unit(i));
    let (theta_tmg, _) = tmg_from_rows(&rows, &st);
    let (ybar, xbar) = panel.cross_means();
    let mut wbar = Mat::from_element(t, k, 1.0);
    wbar.view_mut((0, 1), (t, k - 1)).copy_from(&xbar);
    let mt = within_matrix(t);
    let sys = Mat::identity(k, k) - qbar.transpose() * &mt * &wbar;
    let sys_inv = inv_checked(&sys).ok_or(Error::SingularTeSystem)?;
    let theta = &sys_inv * (theta_tmg - qbar.transpose() * &mt * &ybar);
    let phi = &mt * (&ybar - &wbar * &theta);
    let mut v = Mat::zeros(k, k);
    for (i, u) in des.iter().enumerate() {
        let e = &rows[i] - u.trimmed_estimate(&phi, st.a_n) - &theta;
        v += &e * e.transpose();
    }
    v /= (n - 1.0) * scale * scale;
    let cov = symmetrize(&(&sys_inv * v * sys_inv.transpose() / (n - 1.0)));
    let beta = theta.rows(1, k - 1).into_owned();
    let var_beta = cov.view((1, 1), (k - 1, k - 1)).into_owned();
    let phi_cov = combined_phi_cov(panel, &xbar, &var_beta, &beta, &phi);

    let qbar_x = qbar.columns(1, k - 1).into_owned();
    let sys_x = Mat::identity(k - 1, k - 1) - qbar_x.transpose() * &mt * &xbar;
    let sys_inv_x = inv_checked(&sys_x);

    let est = Estimate {
        method: Method::TmgTe,
        coef: theta,
        cov,
        has_intercept: true,
        n_used: panel.n(),
        pi_n: st.pi_n,
        alpha_used: Some(cfg.alpha),
        per_unit: Some(Mat::from_fn(rows.len(), k, |i, j| rows[i][j])),
    };
    let parts = TmgTeParts { a_n: st.a_n, delta_bar: st.delta_bar, sys_inv_x, projector: None };
    Ok((est, TimeEffects { phi, cov: phi_cov, method: TeMethod::SystemSolve }, parts))
}

/// TMG estimator allowing for common time effects.
pub fn tmg_te(panel: &BalancedPanel, cfg: &TrimConfig) -> Result<(Estimate, TimeEffects)> {
    tmg_te_full(panel, cfg).map(|(e, p, _)| (e, p))
}

/// GP estimator with time effects: phi_C when T > k, otherwise the
/// average of M_T y_i over the units the bandwidth rule trims.
pub fn gp_te(panel: &BalancedPanel, alpha_gp: f64) -> Result<(Estimate, TimeEffects)> {
    if !(alpha_gp > 0.0 && alpha_gp < 1.0) {
        return Err(Error::InvalidConfig(format!("alpha_gp must lie in (0,1), got {}", alpha_gp)));
    }
    let keep = gp_keep(panel, alpha_gp);
    let te = if panel.t() > panel.k() {
        chamberlain_phi(panel)?
    } else {
        let stay: Vec<Vector> = (0..panel.n()).filter(|&i| !keep[i]).map(|i| demean(&panel.y_unit(i))).collect();
        if stay.len() < 2 {
            return Err(Error::SingularTeSystem);
        }
        let m = stay.len() as f64;
        let t = panel.t();
        let mut phi = Vector::zeros(t);
        for s in &stay {
            phi += s;
        }
        phi /= m;
        let mut cov = Mat::zeros(t, t);
        for s in &stay {
            let d = s - &phi;
            cov += &d * d.transpose();
        }
        cov /= m * (m - 1.0);
        TimeEffects { phi, cov, method: TeMethod::Stayers }
    };
    let (coef, cov, used) = gp_from_keep(panel, &keep, |i| panel.y_unit(i) - &te.phi)?;
    let est = Estimate {
        method: Method::GpTe,
        coef,
        cov,
        has_intercept: true,
        n_used: used,
        pi_n: 1.0 - used as f64 / panel.n() as f64,
        alpha_used: Some(alpha_gp),
        per_unit: None,
    };
    Ok((est, te))
}
