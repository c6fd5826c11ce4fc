//! Hausman tests of correlated heterogeneity and the chi-squared tail.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{fe, tmg_with_state};
use crate::linalg::{demean, inv_checked, sym_pinv, within_matrix, Mat, Vector};
use crate::panel::BalancedPanel;
use crate::time_effects::{fete_full, q_matrix, tmg_te_full};
use crate::trimming::{trim_designs, TrimConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HausmanVariant {
    NoTE,
    TeTeqK,
    TeTgtK,
}

#[derive(Debug, Clone)]
pub struct HausmanResult {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    pub variant: HausmanVariant,
    pub delta: Vector,
    pub v_delta: Mat,
}

const PINV_CUT: f64 = 1e-12;

fn finish(delta: Vector, v: Mat, n: usize, variant: HausmanVariant) -> Result<HausmanResult> {
    let kp = delta.len();
    let v = crate::linalg::symmetrize(&v);
    let (vinv, rank) = sym_pinv(&v, PINV_CUT);
    if rank < kp {
        return Err(Error::SingularVdelta { rank, needed: kp });
    }
    let statistic = (n as f64 * (delta.transpose() * vinv * &delta)[(0, 0)]).max(0.0);
    Ok(HausmanResult { statistic, df: kp, p_value: chisq_sf(statistic, kp), variant, delta, v_delta: v })
}

/// Test without time effects: FE against TMG.
pub fn hausman_no_te(panel: &BalancedPanel, cfg: &TrimConfig) -> Result<HausmanResult> {
    let des = panel.designs();
    let n = panel.n() as f64;
    let kp = panel.k_prime();
    let fe_est = fe(panel)?;
    let st = trim_designs(des, cfg)?;
    let tmg_est = tmg_with_state(panel, cfg, &st)?;
    let delta = &fe_est.coef - tmg_est.beta();

    let mut psibar = Mat::zeros(kp, kp);
    for u in des {
        psibar += &u.psi_x;
    }
    let pbinv = inv_checked(&(psibar / n)).ok_or(Error::SingularPooledGram)?;
    let scale = 1.0 + st.delta_bar;
    let mut v = Mat::zeros(kp, kp);
    for (i, u) in des.iter().enumerate() {
        // (1 + delta_i) Psi_ix^{-1} is the slope block of (1 + delta_i)(W'W)^{-1}
        let sinv = u.scaled_inverse(st.a_n).view((1, 1), (kp, kp)).into_owned();
        let nu = demean(&panel.y_unit(i)) - &u.xd * &fe_est.coef;
        let g = (&pbinv - sinv / scale) * (u.xd.transpose() * nu);
        v += &g * g.transpose();
    }
    finish(delta, v / n, panel.n(), HausmanVariant::NoTE)
}

/// Test with time effects: FE-TE against TMG-TE (system-solve or Chamberlain form).
pub fn hausman_te(panel: &BalancedPanel, cfg: &TrimConfig) -> Result<HausmanResult> {
    let des = panel.designs();
    let n = panel.n() as f64;
    let kp = panel.k_prime();
    let t = panel.t();
    let (fete_est, _, fp) = fete_full(panel)?;
    let (tte, _, tp) = tmg_te_full(panel, cfg)?;
    let delta = &fete_est.coef - tte.beta();
    let scale = 1.0 + tp.delta_bar;
    let mt = within_matrix(t);

    let qx: Vec<Mat> = des.iter().map(|u| q_matrix(u, tp.a_n).columns(1, kp).into_owned()).collect();
    let mut qbar_x = Mat::zeros(t, kp);
    for q in &qx {
        qbar_x += q;
    }
    qbar_x /= n * scale;

    let variant = if t > panel.k() { HausmanVariant::TeTgtK } else { HausmanVariant::TeTeqK };
    let mut v = Mat::zeros(kp, kp);
    for (i, q) in qx.iter().enumerate() {
        let xc = panel.x_unit(i) - &fp.xbar;
        let nu = demean(&((panel.y_unit(i) - &fp.ybar) - &xc * &fete_est.coef));
        let g = match variant {
            HausmanVariant::TeTeqK => {
                let sinv = tp.sys_inv_x.as_ref().ok_or(Error::SingularTeSystem)?;
                &xc * &fp.psi_inv - q * sinv.transpose() / scale
            }
            _ => {
                let (proj, mb_inv) = tp.projector.as_ref().expect("projector for T > k");
                &xc * &fp.psi_inv - (q / scale - &proj.m[i] * mb_inv * &mt * &qbar_x)
            }
        };
        // nu is already within-transformed, so M_T nu = nu
        let s = g.transpose() * nu;
        v += &s * s.transpose();
    }
    finish(delta, v / n, panel.n(), variant)
}

/// Regularized upper incomplete gamma Q(a, x).
pub fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < a + 1.0 {
        1.0 - gamma_p_series(a, x)
    } else {
        gamma_q_cf(a, x)
    }
}

fn ln_gamma(x: f64) -> f64 {
    // Lanczos, g = 7, n = 9
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        return (std::f64::consts::PI / (std::f64::consts::PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    let tt = x + G + 0.5;
    for (i, c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * tt.ln() - tt + a.ln()
}

fn gamma_p_series(a: f64, x: f64) -> f64 {
    let mut sum = 1.0 / a;
    let mut term = sum;
    let mut ap = a;
    for _ in 0..10_000 {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * 1e-17 {
            break;
        }
    }
    (sum.ln() - x + a * x.ln() - ln_gamma(a)).exp()
}

fn gamma_q_cf(a: f64, x: f64) -> f64 {
    // modified Lentz
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..10_000 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

/// Upper-tail probability of chi-squared with `df` degrees of freedom.
pub fn chisq_sf(x: f64, df: usize) -> f64 {
    assert!(df >= 1, "df must be positive");
    if !(x > 0.0) {
        return 1.0;
    }
    gamma_q(df as f64 / 2.0, x / 2.0).clamp(0.0, 1.0)
}
