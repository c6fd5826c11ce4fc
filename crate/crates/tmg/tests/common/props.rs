//! Exact algebraic properties, each checked on one panel.

use tmg::linalg::{within_matrix, Mat};
use tmg::montecarlo::{run_experiment, DgpConfig, EstimatorSpec};
use tmg::{BalancedPanel, CnRule, TrimConfig};

fn third() -> TrimConfig {
    TrimConfig::with_alpha(1.0 / 3.0)
}

fn scale_of(m: &Mat) -> f64 {
    m.iter().fold(1.0f64, |s, v| s.max(v.abs()))
}

pub fn weights_sum_to_one(p: &BalancedPanel) -> Result<(), String> {
    let st = tmg::trimming::trim_designs(p.designs(), &third()).map_err(|e| e.to_string())?;
    let s: f64 = st.weights().iter().sum();
    if (s - 1.0).abs() > 1e-12 {
        return Err(format!("weights sum to {}", s));
    }
    Ok(())
}

/// The adjugate form of a trimmed estimate equals (d_i / a_n) times OLS,
/// and the TMG coefficient equals the weighted sum of OLS estimates.
pub fn two_forms_agree(p: &BalancedPanel) -> Result<(), String> {
    let st = tmg::trimming::trim_designs(p.designs(), &third()).map_err(|e| e.to_string())?;
    let w = st.weights();
    let mut wsum = tmg::linalg::Vector::zeros(p.k());
    for (i, u) in p.designs().iter().enumerate() {
        let y = p.y_unit(i);
        let ols = tmg::unit_ols(u, &y).map_err(|e| e.to_string())?;
        let a = tmg::trimmed_unit_estimate(u, &y, st.a_n);
        let b = &ols * (1.0 + st.delta[i]);
        let sc = b.iter().fold(1.0f64, |s, v| s.max(v.abs()));
        if (&a - &b).amax() > 1e-10 * sc {
            return Err(format!("unit {}: {} vs {}", i, a, b));
        }
        wsum += ols * w[i];
    }
    let e = tmg::tmg(p, &third()).map_err(|e| e.to_string())?;
    let sc = wsum.iter().fold(1.0f64, |s, v| s.max(v.abs()));
    if (&e.coef - &wsum).amax() > 1e-10 * sc {
        return Err("tmg differs from weighted OLS".into());
    }
    Ok(())
}

pub fn tmg_equals_mg_without_trimming(p: &BalancedPanel) -> Result<(), String> {
    let dmin = p.designs().iter().map(|u| u.d).fold(f64::INFINITY, f64::min);
    let cfg = TrimConfig { alpha: 1.0 / 3.0, c_n_rule: CnRule::Explicit(dmin * 1e-3) };
    let t = tmg::tmg(p, &cfg).map_err(|e| e.to_string())?;
    let m = tmg::mg(p).map_err(|e| e.to_string())?;
    if t.pi_n != 0.0 {
        return Err("units trimmed".into());
    }
    let cs = scale_of(&m.cov);
    let bs = m.coef.iter().fold(1.0f64, |s, v| s.max(v.abs()));
    if (&t.coef - &m.coef).amax() > 1e-12 * bs || (&t.cov - &m.cov).amax() > 1e-12 * cs {
        return Err("tmg and mg differ".into());
    }
    Ok(())
}

/// Rescaling x leaves the trimmed set and every t-ratio unchanged.
pub fn scale_equivariance(p: &BalancedPanel, c: f64) -> Result<(), String> {
    let q = p.scale_x(c);
    let a = tmg::tmg(p, &third()).map_err(|e| e.to_string())?;
    let b = tmg::tmg(&q, &third()).map_err(|e| e.to_string())?;
    let sa = tmg::trimming::trim_designs(p.designs(), &third()).unwrap();
    let sb = tmg::trimming::trim_designs(q.designs(), &third()).unwrap();
    if sa.trimmed != sb.trimmed {
        return Err("trimmed set changed".into());
    }
    let ta = a.coef.component_div(&a.se());
    let tb = b.coef.component_div(&b.se());
    for (x, y) in ta.iter().zip(tb.iter()) {
        if (x - y).abs() > 1e-9 * x.abs().max(1.0) {
            return Err(format!("t-ratio {} vs {}", x, y));
        }
    }
    Ok(())
}

pub fn adjugate_identity(p: &BalancedPanel) -> Result<(), String> {
    for (i, u) in p.designs().iter().enumerate() {
        let k = u.k();
        let rhs = Mat::identity(k, k) * u.d;
        let sc = scale_of(&u.gram).powi(k as i32);
        if (&u.gram * &u.adj - &rhs).amax() > 1e-10 * sc || (&u.adj * &u.gram - &rhs).amax() > 1e-10 * sc {
            return Err(format!("unit {}", i));
        }
    }
    Ok(())
}

pub fn projector_identities(p: &BalancedPanel) -> Result<(), String> {
    let pr = tmg::ChamberlainProjector::new(p);
    let mt = within_matrix(p.t());
    for (i, m) in pr.m.iter().enumerate() {
        if (m * m - m).amax() > 1e-9 {
            return Err(format!("M_{} not idempotent", i));
        }
        if (m * &mt * p.x_unit(i)).amax() > 1e-9 * scale_of(p.x_unit(i)) {
            return Err(format!("M_{} M_T X_{} != 0", i, i));
        }
    }
    Ok(())
}

pub fn phi_sums_to_zero(p: &BalancedPanel) -> Result<(), String> {
    let mut phis = vec![
        ("fete", tmg::fete(p).map_err(|e| e.to_string())?.1.phi),
        ("tmg_te", tmg::tmg_te(p, &third()).map_err(|e| e.to_string())?.1.phi),
    ];
    if p.t() > p.k() {
        phis.push(("chamberlain", tmg::chamberlain_phi(p).map_err(|e| e.to_string())?.phi));
    }
    for (name, phi) in phis {
        if phi.sum().abs() > 1e-10 * phi.amax().max(1.0) {
            return Err(format!("{}: sum {}", name, phi.sum()));
        }
    }
    Ok(())
}

/// Scaling y or x and adding unit-specific constants to y leave H unchanged.
pub fn hausman_invariance(p: &BalancedPanel, cy: f64, cx: f64, shift: &[f64]) -> Result<(), String> {
    let base = tmg::hausman_no_te(p, &third()).map_err(|e| e.to_string())?.statistic;
    let base_te = tmg::hausman_te(p, &third()).map_err(|e| e.to_string())?.statistic;
    let y2 = Mat::from_fn(p.n(), p.t(), |i, s| cy * p.y()[(i, s)] + shift[i]);
    let q = p.with_y(y2).map_err(|e| e.to_string())?.scale_x(cx);
    let h = tmg::hausman_no_te(&q, &third()).map_err(|e| e.to_string())?.statistic;
    let h_te = tmg::hausman_te(&q, &third()).map_err(|e| e.to_string())?.statistic;
    if (h - base).abs() > 1e-8 * base.max(1.0) {
        return Err(format!("H {} vs {}", h, base));
    }
    if (h_te - base_te).abs() > 1e-8 * base_te.max(1.0) {
        return Err(format!("H_te {} vs {}", h_te, base_te));
    }
    Ok(())
}

pub fn chisq_df2_closed_form(x: f64) -> Result<(), String> {
    let p = tmg::chisq_sf(x, 2);
    let e = (-x / 2.0).exp();
    if (p - e).abs() > 1e-10 {
        return Err(format!("sf({}) = {} vs {}", x, p, e));
    }
    Ok(())
}

/// Results and power CSV for a small experiment run with the given worker count.
pub fn small_experiment_csv(jobs: usize) -> String {
    let mut cfg = DgpConfig::baseline(150, 2);
    cfg.kappa2 = Some(15.5);
    cfg.seed = 11;
    let specs = [
        EstimatorSpec::Fe,
        EstimatorSpec::Tmg { alpha: 1.0 / 3.0 },
        EstimatorSpec::Gp { alpha_gp: 1.0 / 3.0 },
        EstimatorSpec::Hausman { alpha: 1.0 / 3.0 },
    ];
    let grid = tmg::montecarlo::default_grid(1.0);
    let rows = run_experiment(&cfg, &specs, 60, Some(&grid), Some(jobs)).unwrap();
    let mut s = tmg::cli::results_table(&rows);
    s.push_str(&tmg::cli::power_table(rows[1].power_curve.as_ref().unwrap()));
    s
}

pub fn parallel_runs_identical() -> Result<(), String> {
    let a = small_experiment_csv(1);
    for j in [2, 4] {
        if small_experiment_csv(j) != a {
            return Err(format!("jobs={} output differs", j));
        }
    }
    Ok(())
}

/// All single-panel properties.
pub fn check_panel(p: &BalancedPanel) -> Result<(), String> {
    weights_sum_to_one(p)?;
    two_forms_agree(p)?;
    tmg_equals_mg_without_trimming(p)?;
    scale_equivariance(p, 3.7)?;
    scale_equivariance(p, 0.05)?;
    adjugate_identity(p)?;
    projector_identities(p)?;
    phi_sums_to_zero(p)?;
    let shift: Vec<f64> = (0..p.n()).map(|i| (i as f64 * 1.3).sin() * 5.0).collect();
    hausman_invariance(p, 2.5, 0.4, &shift)?;
    Ok(())
}
