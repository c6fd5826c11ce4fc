//! FE, MG, TMG and GP estimators and the A_n / B_n efficiency diagnostics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{det, inv_checked, symmetrize, Mat, Vector};
use crate::panel::{unit_ols, BalancedPanel};
use crate::trimming::{trim_designs, TrimConfig, TrimState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "fe")]
    Fe,
    #[serde(rename = "mg")]
    Mg,
    #[serde(rename = "tmg")]
    Tmg,
    #[serde(rename = "gp")]
    Gp,
    #[serde(rename = "fete")]
    FeTe,
    #[serde(rename = "tmgte")]
    TmgTe,
    #[serde(rename = "gpte")]
    GpTe,
}

impl Method {
    pub fn tag(&self) -> &'static str {
        match self {
            Method::Fe => "fe",
            Method::Mg => "mg",
            Method::Tmg => "tmg",
            Method::Gp => "gp",
            Method::FeTe => "fete",
            Method::TmgTe => "tmgte",
            Method::GpTe => "gpte",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Estimate {
    pub method: Method,
    /// Intercept first when present, then slopes.
    pub coef: Vector,
    pub cov: Mat,
    pub has_intercept: bool,
    pub n_used: usize,
    pub pi_n: f64,
    pub alpha_used: Option<f64>,
    /// Rows are the per-unit (possibly trimmed) estimates.
    pub per_unit: Option<Mat>,
}

impl Estimate {
    pub fn se(&self) -> Vector {
        self.cov.diagonal().map(|v| v.max(0.0).sqrt())
    }

    fn off(&self) -> usize {
        usize::from(self.has_intercept)
    }

    pub fn beta(&self) -> Vector {
        self.coef.rows(self.off(), self.coef.len() - self.off()).into_owned()
    }

    pub fn beta_cov(&self) -> Mat {
        let o = self.off();
        let m = self.coef.len() - o;
        self.cov.view((o, o), (m, m)).into_owned()
    }

    pub fn names(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.has_intercept {
            v.push("intercept".to_string());
        }
        v.extend((1..=self.coef.len() - self.off()).map(|j| format!("x{}", j)));
        v
    }
}

#[derive(Debug, Clone)]
pub struct EfficiencyDiagnostics {
    pub a_n: Mat,
    pub b_n: Mat,
}

fn outer_mean(dev: &[Vector]) -> Mat {
    let k = dev[0].len();
    let mut s = Mat::zeros(k, k);
    for v in dev {
        s += v * v.transpose();
    }
    s
}

/// Within (fixed-effects) estimator with unit-clustered covariance.
pub fn fe(panel: &BalancedPanel) -> Result<Estimate> {
    let des = panel.designs();
    let n = panel.n() as f64;
    let kp = panel.k_prime();
    let mut psibar = Mat::zeros(kp, kp);
    let mut r = Vector::zeros(kp);
    let xys: Vec<Vector> = (0..panel.n()).map(|i| des[i].xd.transpose() * panel.y_unit(i)).collect();
    for (u, xy) in des.iter().zip(&xys) {
        psibar += &u.psi_x;
        r += xy;
    }
    psibar /= n;
    r /= n;
    let pinv = inv_checked(&psibar).ok_or(Error::SingularPooledGram)?;
    let beta = &pinv * r;
    let scores: Vec<Vector> = des.iter().zip(&xys).map(|(u, xy)| xy - &u.psi_x * &beta).collect();
    let meat = outer_mean(&scores) / (n * n);
    let cov = symmetrize(&(&pinv * meat * &pinv));
    Ok(Estimate {
        method: Method::Fe,
        coef: beta,
        cov,
        has_intercept: false,
        n_used: panel.n(),
        pi_n: 0.0,
        alpha_used: None,
        per_unit: None,
    })
}

/// Mean and (1/(n(n-1))) sum of outer deviations around `centre`.
fn mg_moments(rows: &[Vector], centre: &Vector) -> Mat {
    let n = rows.len() as f64;
    let dev: Vec<Vector> = rows.iter().map(|r| r - centre).collect();
    if rows.len() < 2 {
        return Mat::zeros(centre.len(), centre.len());
    }
    outer_mean(&dev) / (n * (n - 1.0))
}

fn stack(rows: &[Vector]) -> Mat {
    let k = rows[0].len();
    Mat::from_fn(rows.len(), k, |i, j| rows[i][j])
}

fn mean_vec(rows: &[Vector]) -> Vector {
    let mut s = Vector::zeros(rows[0].len());
    for r in rows {
        s += r;
    }
    s / rows.len() as f64
}

/// Mean group estimator.
pub fn mg(panel: &BalancedPanel) -> Result<Estimate> {
    let des = panel.designs();
    let bad: Vec<usize> = des.iter().enumerate().filter(|(_, u)| u.is_singular()).map(|(i, _)| i).collect();
    if !bad.is_empty() {
        return Err(Error::SingularDesign(bad));
    }
    let th: Vec<Vector> = (0..panel.n()).map(|i| unit_ols(&des[i], &panel.y_unit(i))).collect::<Result<_>>()?;
    let coef = mean_vec(&th);
    let cov = symmetrize(&mg_moments(&th, &coef));
    Ok(Estimate {
        method: Method::Mg,
        coef,
        cov,
        has_intercept: true,
        n_used: panel.n(),
        pi_n: 0.0,
        alpha_used: None,
        per_unit: Some(stack(&th)),
    })
}

/// Per-unit trimmed estimates for outcome matrix rows `y_i`.
pub(crate) fn trimmed_rows(panel: &BalancedPanel, st: &TrimState, y: impl Fn(usize) -> Vector) -> Vec<Vector> {
    let des = panel.designs();
    (0..panel.n()).map(|i| des[i].trimmed_estimate(&y(i), st.a_n)).collect()
}

/// TMG point estimate and covariance from trimmed per-unit estimates.
pub(crate) fn tmg_from_rows(rows: &[Vector], st: &TrimState) -> (Vector, Mat) {
    let scale = 1.0 + st.delta_bar;
    let coef = mean_vec(rows) / scale;
    let cov = symmetrize(&(mg_moments(rows, &coef) / (scale * scale)));
    (coef, cov)
}

/// Trimmed mean group estimator.
pub fn tmg(panel: &BalancedPanel, cfg: &TrimConfig) -> Result<Estimate> {
    let st = trim_designs(panel.designs(), cfg)?;
    tmg_with_state(panel, cfg, &st)
}

pub(crate) fn tmg_with_state(panel: &BalancedPanel, cfg: &TrimConfig, st: &TrimState) -> Result<Estimate> {
    if st.pi_n >= 1.0 {
        return Err(Error::AllTrimmed);
    }
    let rows = trimmed_rows(panel, st, |i| panel.y_unit(i));
    let (coef, cov) = tmg_from_rows(&rows, st);
    Ok(Estimate {
        method: Method::Tmg,
        coef,
        cov,
        has_intercept: true,
        n_used: panel.n(),
        pi_n: st.pi_n,
        alpha_used: Some(cfg.alpha),
        per_unit: Some(stack(&rows)),
    })
}

/// Type-7 (linear interpolation) sample quantile of sorted data.
fn quantile_sorted(v: &[f64], p: f64) -> f64 {
    let h = (v.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

/// Units kept by the GP bandwidth rule.
pub fn gp_keep(panel: &BalancedPanel, alpha_gp: f64) -> Vec<bool> {
    let des = panel.designs();
    let n = panel.n() as f64;
    if panel.t() == panel.k() {
        let dets: Vec<f64> = des.iter().map(|u| det(&u.w)).collect();
        let mean = dets.iter().sum::<f64>() / n;
        let sd = (dets.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let mut s = dets.clone();
        s.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let iqr = quantile_sorted(&s, 0.75) - quantile_sorted(&s, 0.25);
        let h = 0.5 * sd.min(iqr / 1.34) * n.powf(-alpha_gp);
        dets.iter().zip(des).map(|(dw, u)| dw.abs() > h && !u.is_singular()).collect()
    } else {
        let dbar = des.iter().map(|u| u.d).sum::<f64>() / n;
        let h = dbar.sqrt() * n.powf(-alpha_gp);
        des.iter().map(|u| u.d >= h * h && !u.is_singular()).collect()
    }
}

/// Simple mean of per-unit OLS over the kept set, given outcome rows.
pub(crate) fn gp_from_keep(panel: &BalancedPanel, keep: &[bool], y: impl Fn(usize) -> Vector) -> Result<(Vector, Mat, usize)> {
    let des = panel.designs();
    let th: Vec<Vector> = (0..panel.n())
        .filter(|&i| keep[i])
        .map(|i| unit_ols(&des[i], &y(i)))
        .collect::<Result<_>>()?;
    if th.is_empty() {
        return Err(Error::AllTrimmed);
    }
    let coef = mean_vec(&th);
    let cov = symmetrize(&mg_moments(&th, &coef));
    Ok((coef, cov, th.len()))
}

/// Graham-Powell trimmed estimator.
pub fn gp(panel: &BalancedPanel, alpha_gp: f64) -> Result<Estimate> {
    if !(alpha_gp > 0.0 && alpha_gp < 1.0) {
        return Err(Error::InvalidConfig(format!("alpha_gp must lie in (0,1), got {}", alpha_gp)));
    }
    let keep = gp_keep(panel, alpha_gp);
    let (coef, cov, used) = gp_from_keep(panel, &keep, |i| panel.y_unit(i))?;
    Ok(Estimate {
        method: Method::Gp,
        coef,
        cov,
        has_intercept: true,
        n_used: used,
        pi_n: 1.0 - used as f64 / panel.n() as f64,
        alpha_used: Some(alpha_gp),
        per_unit: None,
    })
}

/// A_n and B_n for given slope variance and per-unit error covariances.
pub fn efficiency_diagnostics(panel: &BalancedPanel, omega_beta: &Mat, h: &[Mat]) -> Result<EfficiencyDiagnostics> {
    let des = panel.designs();
    let n = panel.n() as f64;
    let kp = panel.k_prime();
    if h.len() != panel.n() {
        return Err(Error::InvalidConfig(format!("{} error covariances for {} units", h.len(), panel.n())));
    }
    let mut psibar = Mat::zeros(kp, kp);
    let mut pop = Mat::zeros(kp, kp);
    let mut b1 = Mat::zeros(kp, kp);
    let mut b2 = Mat::zeros(kp, kp);
    for (i, u) in des.iter().enumerate() {
        psibar += &u.psi_x;
        pop += &u.psi_x * omega_beta * &u.psi_x;
        let s = u.xd.transpose() * &h[i] * &u.xd;
        let pinv = inv_checked(&u.psi_x).ok_or(Error::SingularUnitGram(i))?;
        b1 += &pinv * &s * &pinv;
        b2 += s;
    }
    psibar /= n;
    let pbinv = inv_checked(&psibar).ok_or(Error::SingularPooledGram)?;
    let a_n = symmetrize(&(omega_beta - &pbinv * (pop / n) * &pbinv));
    let b_n = symmetrize(&(b1 / n - &pbinv * (b2 / n) * &pbinv));
    Ok(EfficiencyDiagnostics { a_n, b_n })
}
