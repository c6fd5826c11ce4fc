//! Stochastic calibration of the error scale kappa^2 to a target pooled fit.

use rayon::prelude::*;

use super::dgp::{draw_theta, draw_x_unit, factor_path, stream, DgpConfig, Role};
use crate::error::Result;

pub const R_KAPPA: usize = 1000;
pub const N_CAL: usize = 5000;

/// kappa^2 = ((1 - PR2)/PR2) (A - B^2), with A and B the pooled means of
/// beta_i^2 x_it^2 and beta_i x_it over `reps` samples of `n_cal` units.
pub fn calibrate_kappa(cfg: &DgpConfig, reps: usize, n_cal: usize) -> Result<f64> {
    let mut c = cfg.clone();
    c.kappa2 = Some(0.0);
    c.validate()?;
    let sums: Vec<(f64, f64)> = (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let mut rx = stream(c.seed, r, Role::CalX);
            let mut rc = stream(c.seed, r, Role::CalCoef);
            let f = if c.interactive_x { Some(factor_path(&mut rx, c.t)) } else { None };
            let (mut a, mut b) = (0.0, 0.0);
            for _ in 0..n_cal {
                let xu = draw_x_unit(&mut rx, &c, f.as_deref());
                let (_, beta) = draw_theta(&mut rc, &c, xu.lambda);
                for x in &xu.x {
                    let bx = beta * x;
                    a += bx * bx;
                    b += bx;
                }
            }
            (a, b)
        })
        .collect();
    let m = (reps * n_cal * c.t) as f64;
    let (a, b) = sums.iter().fold((0.0, 0.0), |acc, s| (acc.0 + s.0, acc.1 + s.1));
    let (a, b) = (a / m, b / m);
    Ok((1.0 - c.pr2) / c.pr2 * (a - b * b))
}
