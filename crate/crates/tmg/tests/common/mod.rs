//! Brute-force reference implementations: explicit M_T matrices, full
//! inverses and LU determinants, no adjugates.

#![allow(dead_code)]

pub mod props;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tmg::BalancedPanel;

pub type M = DMatrix<f64>;
pub type V = DVector<f64>;

pub struct Fix {
    pub y: Vec<V>,
    pub x: Vec<M>,
    pub n: usize,
    pub t: usize,
    pub kp: usize,
}

impl Fix {
    pub fn from_panel(p: &BalancedPanel) -> Self {
        Fix {
            y: (0..p.n()).map(|i| p.y_unit(i)).collect(),
            x: (0..p.n()).map(|i| p.x_unit(i).clone()).collect(),
            n: p.n(),
            t: p.t(),
            kp: p.k_prime(),
        }
    }
    pub fn k(&self) -> usize {
        self.kp + 1
    }
    pub fn w(&self, i: usize) -> M {
        let mut w = M::from_element(self.t, self.kp + 1, 1.0);
        for s in 0..self.t {
            for j in 0..self.kp {
                w[(s, j + 1)] = self.x[i][(s, j)];
            }
        }
        w
    }
    pub fn mt(&self) -> M {
        M::identity(self.t, self.t) - M::from_element(self.t, self.t, 1.0 / self.t as f64)
    }
    fn mean_v(v: &[V]) -> V {
        let mut s = V::zeros(v[0].len());
        for a in v {
            s += a;
        }
        s / v.len() as f64
    }
    fn mean_m(v: &[M]) -> M {
        let mut s = M::zeros(v[0].nrows(), v[0].ncols());
        for a in v {
            s += a;
        }
        s / v.len() as f64
    }
    pub fn ybar(&self) -> V {
        Self::mean_v(&self.y)
    }
    pub fn xbar(&self) -> M {
        Self::mean_m(&self.x)
    }
    pub fn d(&self, i: usize) -> f64 {
        let w = self.w(i);
        (w.transpose() * &w).lu().determinant()
    }
}

pub fn inv(m: &M) -> M {
    m.clone().try_inverse().expect("oracle: singular matrix")
}

/// Random panel with n <= 10, T <= 4.
pub fn random_fixture(seed: u64) -> Fix {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let t = r.random_range(2..=4usize);
    let kp = if t >= 3 && r.random::<bool>() { 2 } else { 1 };
    let n = r.random_range(4..=10usize);
    let sc = 0.5 + 2.0 * r.random::<f64>();
    let mut g = || -> f64 {
        // sum of uniforms: light-tailed, cheap
        (0..4).map(|_| r.random::<f64>() - 0.5).sum::<f64>() * 1.7
    };
    let x: Vec<M> = (0..n).map(|_| M::from_fn(t, kp, |_, _| sc * g())).collect();
    let y: Vec<V> = (0..n)
        .map(|i| V::from_fn(t, |s, _| 1.0 + (0..kp).map(|j| x[i][(s, j)]).sum::<f64>() * (1.0 + 0.3 * g()) + g()))
        .collect();
    Fix { y, x, n, t, kp }
}

pub fn to_panel(f: &Fix) -> BalancedPanel {
    let y = M::from_fn(f.n, f.t, |i, s| f.y[i][s]);
    BalancedPanel::new(y, f.x.clone()).unwrap()
}

pub struct Est {
    pub coef: V,
    pub cov: M,
}

fn outer_sum(v: &[V], c: &V) -> M {
    let mut s = M::zeros(c.len(), c.len());
    for a in v {
        let d = a - c;
        s += &d * d.transpose();
    }
    s
}

pub fn fe(f: &Fix) -> Est {
    let mt = f.mt();
    let n = f.n as f64;
    let psi = Fix::mean_m(&f.x.iter().map(|x| x.transpose() * &mt * x).collect::<Vec<_>>());
    let r = Fix::mean_v(&(0..f.n).map(|i| f.x[i].transpose() * &mt * &f.y[i]).collect::<Vec<_>>());
    let pi = inv(&psi);
    let b = &pi * r;
    let mut meat = M::zeros(f.kp, f.kp);
    for i in 0..f.n {
        let u = &mt * &f.y[i] - &mt * &f.x[i] * &b;
        let s = f.x[i].transpose() * &mt * u;
        meat += &s * s.transpose();
    }
    Est { coef: b, cov: &pi * (meat / (n * n)) * &pi }
}

pub fn ols(f: &Fix, i: usize, y: &V) -> V {
    let w = f.w(i);
    inv(&(w.transpose() * &w)) * w.transpose() * y
}

pub fn mg(f: &Fix) -> Est {
    let th: Vec<V> = (0..f.n).map(|i| ols(f, i, &f.y[i])).collect();
    let c = Fix::mean_v(&th);
    let n = f.n as f64;
    Est { cov: outer_sum(&th, &c) / (n * (n - 1.0)), coef: c }
}

pub struct Trim {
    pub a_n: f64,
    pub delta: Vec<f64>,
    pub dbar: f64,
}

pub fn trim(f: &Fix, alpha: f64) -> Trim {
    let d: Vec<f64> = (0..f.n).map(|i| f.d(i)).collect();
    let n = f.n as f64;
    let a_n = d.iter().sum::<f64>() / n * n.powf(-alpha);
    let delta: Vec<f64> = d.iter().map(|&di| if di <= a_n { (di - a_n) / a_n } else { 0.0 }).collect();
    let dbar = delta.iter().sum::<f64>() / n;
    Trim { a_n, delta, dbar }
}

pub fn tmg(f: &Fix, alpha: f64) -> Est {
    let tr = trim(f, alpha);
    let th: Vec<V> = (0..f.n).map(|i| ols(f, i, &f.y[i]) * (1.0 + tr.delta[i])).collect();
    let n = f.n as f64;
    let c = Fix::mean_v(&th) / (1.0 + tr.dbar);
    let cov = outer_sum(&th, &c) / (n * (n - 1.0) * (1.0 + tr.dbar).powi(2));
    Est { coef: c, cov }
}

fn quantile(v: &mut [f64], p: f64) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let h = (v.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

pub fn gp_keep(f: &Fix, alpha: f64) -> Vec<bool> {
    let n = f.n as f64;
    if f.t == f.k() {
        let dw: Vec<f64> = (0..f.n).map(|i| f.w(i).lu().determinant()).collect();
        let m = dw.iter().sum::<f64>() / n;
        let sd = (dw.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let iqr = quantile(&mut dw.clone(), 0.75) - quantile(&mut dw.clone(), 0.25);
        let h = 0.5 * sd.min(iqr / 1.34) * n.powf(-alpha);
        dw.iter().map(|v| v.abs() > h).collect()
    } else {
        let d: Vec<f64> = (0..f.n).map(|i| f.d(i)).collect();
        let h = (d.iter().sum::<f64>() / n).sqrt() * n.powf(-alpha);
        d.iter().map(|v| *v >= h * h).collect()
    }
}

pub fn gp(f: &Fix, alpha: f64) -> Est {
    let keep = gp_keep(f, alpha);
    let th: Vec<V> = (0..f.n).filter(|&i| keep[i]).map(|i| ols(f, i, &f.y[i])).collect();
    let m = th.len() as f64;
    let c = Fix::mean_v(&th);
    Est { cov: outer_sum(&th, &c) / (m * (m - 1.0)), coef: c }
}

pub struct TeEst {
    pub coef: V,
    pub cov: M,
    pub phi: V,
    pub phi_cov: M,
}

pub fn fete(f: &Fix) -> TeEst {
    let mt = f.mt();
    let n = f.n as f64;
    let (xb, yb) = (f.xbar(), f.ybar());
    let psi = Fix::mean_m(&(0..f.n).map(|i| (&f.x[i] - &xb).transpose() * &mt * (&f.x[i] - &xb)).collect::<Vec<_>>());
    let r = Fix::mean_v(&(0..f.n).map(|i| (&f.x[i] - &xb).transpose() * &mt * (&f.y[i] - &yb)).collect::<Vec<_>>());
    let pi = inv(&psi);
    let b = &pi * r;
    let mut meat = M::zeros(f.kp, f.kp);
    for i in 0..f.n {
        let xc = &f.x[i] - &xb;
        let u = &mt * (&f.y[i] - &yb) - &mt * &xc * &b;
        let s = xc.transpose() * &mt * u;
        meat += &s * s.transpose();
    }
    let cov = &pi * (meat / (n * n)) * &pi;
    let phi = &mt * (&yb - &xb * &b);
    let phi_cov = combined(f, &xb, &cov, &b, &phi);
    TeEst { coef: b, cov, phi, phi_cov }
}

fn combined(f: &Fix, xb: &M, vb: &M, b: &V, phi: &V) -> M {
    let mt = f.mt();
    let n = f.n as f64;
    let mut om = M::zeros(f.t, f.t);
    for i in 0..f.n {
        let v = &f.y[i] - &f.x[i] * b - phi;
        om += &v * v.transpose();
    }
    om /= n - 1.0;
    &mt * (xb * vb * xb.transpose() + om / n) * &mt
}

pub fn m_i(f: &Fix, i: usize) -> M {
    let mt = f.mt();
    let x = &f.x[i];
    M::identity(f.t, f.t) - &mt * x * inv(&(x.transpose() * &mt * x)) * x.transpose() * &mt
}

pub fn chamberlain(f: &Fix) -> (V, M) {
    let mt = f.mt();
    let n = f.n as f64;
    let ms: Vec<M> = (0..f.n).map(|i| m_i(f, i)).collect();
    let mb = inv(&Fix::mean_m(&ms));
    let phi = &mb * Fix::mean_v(&(0..f.n).map(|i| &ms[i] * &mt * &f.y[i]).collect::<Vec<_>>());
    let mut s = M::zeros(f.t, f.t);
    for i in 0..f.n {
        let v = &ms[i] * &mt * (&f.y[i] - &phi);
        s += &v * v.transpose();
    }
    let cov = &mb * (s / n) * &mb / n;
    (phi, cov)
}

pub fn q_i(f: &Fix, i: usize, tr: &Trim) -> M {
    let w = f.w(i);
    f.w(i) * inv(&(w.transpose() * &w)) * (1.0 + tr.delta[i])
}

pub fn tmg_te(f: &Fix, alpha: f64) -> TeEst {
    let tr = trim(f, alpha);
    let n = f.n as f64;
    let sc = 1.0 + tr.dbar;
    let qs: Vec<M> = (0..f.n).map(|i| q_i(f, i, &tr)).collect();
    let qbar = Fix::mean_m(&qs) / sc;
    let mt = f.mt();
    if f.t > f.k() {
        let (phi, vphi) = chamberlain(f);
        let th: Vec<V> = (0..f.n).map(|i| qs[i].transpose() * (&f.y[i] - &phi)).collect();
        let c = Fix::mean_v(&th) / sc;
        let cov = outer_sum(&th, &c) / (n * (n - 1.0) * sc * sc) + qbar.transpose() * &vphi * &qbar;
        return TeEst { coef: c, cov, phi, phi_cov: vphi };
    }
    let th: Vec<V> = (0..f.n).map(|i| qs[i].transpose() * &f.y[i]).collect();
    let ttmg = Fix::mean_v(&th) / sc;
    let wbar = Fix::mean_m(&(0..f.n).map(|i| f.w(i)).collect::<Vec<_>>());
    let a = inv(&(M::identity(f.k(), f.k()) - qbar.transpose() * &mt * &wbar));
    let c = &a * (ttmg - qbar.transpose() * &mt * f.ybar());
    let phi = &mt * (f.ybar() - &wbar * &c);
    let mut vt = M::zeros(f.k(), f.k());
    for i in 0..f.n {
        let e = &th[i] - qs[i].transpose() * &phi - &c;
        vt += &e * e.transpose();
    }
    vt /= (n - 1.0) * sc * sc;
    let cov = &a * vt * a.transpose() / (n - 1.0);
    let b = c.rows(1, f.kp).into_owned();
    let vb = cov.view((1, 1), (f.kp, f.kp)).into_owned();
    let phi_cov = combined(f, &f.xbar(), &vb, &b, &phi);
    TeEst { coef: c, cov, phi, phi_cov }
}

/// Returns (statistic, delta).
pub fn hausman(f: &Fix, alpha: f64) -> (f64, V) {
    let mt = f.mt();
    let n = f.n as f64;
    let b_fe = fe(f).coef;
    let b_tmg = tmg(f, alpha).coef.rows(1, f.kp).into_owned();
    let delta = &b_fe - b_tmg;
    let tr = trim(f, alpha);
    let psib = inv(&Fix::mean_m(&f.x.iter().map(|x| x.transpose() * &mt * x).collect::<Vec<_>>()));
    let mut v = M::zeros(f.kp, f.kp);
    for i in 0..f.n {
        let x = &f.x[i];
        let psii = inv(&(x.transpose() * &mt * x));
        let g = (&psib - psii * ((1.0 + tr.delta[i]) / (1.0 + tr.dbar))) * x.transpose();
        let nu = &mt * &f.y[i] - &mt * x * &b_fe;
        for s in 0..f.t {
            for u in 0..f.t {
                v += g.column(s) * g.column(u).transpose() * (nu[s] * nu[u]);
            }
        }
    }
    v /= n;
    ((&delta.transpose() * inv(&v) * &delta)[(0, 0)] * n, delta)
}

pub fn hausman_te(f: &Fix, alpha: f64) -> (f64, V) {
    let mt = f.mt();
    let n = f.n as f64;
    let fe_te = fete(f);
    let tt = tmg_te(f, alpha);
    let delta = &fe_te.coef - tt.coef.rows(1, f.kp);
    let tr = trim(f, alpha);
    let sc = 1.0 + tr.dbar;
    let (xb, yb) = (f.xbar(), f.ybar());
    let psi = Fix::mean_m(&(0..f.n).map(|i| (&f.x[i] - &xb).transpose() * &mt * (&f.x[i] - &xb)).collect::<Vec<_>>());
    let pinv = inv(&psi);
    let qx: Vec<M> = (0..f.n)
        .map(|i| {
            let x = &f.x[i];
            &mt * x * inv(&(x.transpose() * &mt * x)) * (1.0 + tr.delta[i])
        })
        .collect();
    let qbx = Fix::mean_m(&qx) / sc;
    let mut v = M::zeros(f.kp, f.kp);
    let ms: Vec<M> = if f.t > f.k() { (0..f.n).map(|i| m_i(f, i)).collect() } else { vec![] };
    let mbinv = if f.t > f.k() { Some(inv(&Fix::mean_m(&ms))) } else { None };
    for i in 0..f.n {
        let xc = &f.x[i] - &xb;
        let g = if f.t == f.k() {
            let a = inv(&(M::identity(f.kp, f.kp) - qbx.transpose() * &mt * &xb));
            &xc * &pinv - &qx[i] * a.transpose() / sc
        } else {
            &xc * &pinv - (&qx[i] / sc - &ms[i] * mbinv.as_ref().unwrap() * &mt * &qbx)
        };
        let nu = (&f.y[i] - &yb) - &xc * &fe_te.coef;
        let s = g.transpose() * &mt * &nu;
        v += &s * s.transpose();
    }
    v /= n;
    ((&delta.transpose() * inv(&v) * &delta)[(0, 0)] * n, delta)
}

/// max |a - b| <= tol * max(1, max |b|)
pub fn close_m(a: &M, b: &M, tol: f64) -> bool {
    let s = b.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    a.shape() == b.shape() && (a - b).iter().all(|d| d.abs() <= tol * s)
}

pub fn close_v(a: &V, b: &V, tol: f64) -> bool {
    let s = b.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    a.len() == b.len() && (a - b).iter().all(|d| d.abs() <= tol * s)
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

/// Compare every estimator on fixture `seed`; Err names the first mismatch.
pub fn check_fixture(seed: u64) -> Result<(), String> {
    let f = random_fixture(seed);
    let p = to_panel(&f);
    let tol = 1e-9;
    let a = 1.0 / 3.0;
    let cfg = tmg::TrimConfig::with_alpha(a);
    let ctx = |what: &str| format!("seed {} (n={}, T={}, k'={}): {}", seed, f.n, f.t, f.kp, what);

    let e = tmg::fe(&p).map_err(|e| ctx(&e.to_string()))?;
    let o = fe(&f);
    if !(close_v(&e.coef, &o.coef, tol) && close_m(&e.cov, &o.cov, tol)) {
        return Err(ctx("fe"));
    }
    let e = tmg::mg(&p).map_err(|e| ctx(&e.to_string()))?;
    let o = mg(&f);
    if !(close_v(&e.coef, &o.coef, tol) && close_m(&e.cov, &o.cov, tol)) {
        return Err(ctx("mg"));
    }
    let e = tmg::tmg(&p, &cfg).map_err(|e| ctx(&e.to_string()))?;
    let o = tmg(&f, a);
    if !(close_v(&e.coef, &o.coef, tol) && close_m(&e.cov, &o.cov, tol)) {
        return Err(ctx("tmg"));
    }
    if gp_keep(&f, a).iter().filter(|b| **b).count() >= 2 {
        let e = tmg::gp(&p, a).map_err(|e| ctx(&e.to_string()))?;
        let o = gp(&f, a);
        if !(close_v(&e.coef, &o.coef, tol) && close_m(&e.cov, &o.cov, tol)) {
            return Err(ctx("gp"));
        }
    }
    let (e, te) = tmg::fete(&p).map_err(|e| ctx(&e.to_string()))?;
    let o = fete(&f);
    if !(close_v(&e.coef, &o.coef, tol) && close_m(&e.cov, &o.cov, tol) && close_v(&te.phi, &o.phi, tol) && close_m(&te.cov, &o.phi_cov, tol)) {
        return Err(ctx("fete"));
    }
    if f.t > f.k() {
        let te = tmg::chamberlain_phi(&p).map_err(|e| ctx(&e.to_string()))?;
        let (phi, cov) = chamberlain(&f);
        if !(close_v(&te.phi, &phi, tol) && close_m(&te.cov, &cov, tol)) {
            return Err(ctx("chamberlain"));
        }
    }
    let (e, te) = tmg::tmg_te(&p, &cfg).map_err(|e| ctx(&e.to_string()))?;
    let o = tmg_te(&f, a);
    if !(close_v(&e.coef, &o.coef, tol) && close_m(&e.cov, &o.cov, tol) && close_v(&te.phi, &o.phi, tol) && close_m(&te.cov, &o.phi_cov, tol)) {
        return Err(ctx("tmg_te"));
    }
    let h = tmg::hausman_no_te(&p, &cfg).map_err(|e| ctx(&e.to_string()))?;
    let (s, d) = hausman(&f, a);
    if !(close(h.statistic, s, tol) && close_v(&h.delta, &d, tol)) {
        return Err(ctx(&format!("hausman {} vs {}", h.statistic, s)));
    }
    let h = tmg::hausman_te(&p, &cfg).map_err(|e| ctx(&e.to_string()))?;
    let (s, d) = hausman_te(&f, a);
    if !(close(h.statistic, s, tol) && close_v(&h.delta, &d, tol)) {
        return Err(ctx(&format!("hausman_te {} vs {}", h.statistic, s)));
    }
    Ok(())
}
