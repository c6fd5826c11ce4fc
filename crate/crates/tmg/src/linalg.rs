//! Small dense helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Determinant by cofactor expansion for k <= 4, LU otherwise.
pub fn det(a: &Mat) -> f64 {
    let k = a.nrows();
    assert_eq!(k, a.ncols(), "det needs a square matrix");
    match k {
        0 => 1.0,
        1 => a[(0, 0)],
        2 => a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)],
        3 => {
            a[(0, 0)] * (a[(1, 1)] * a[(2, 2)] - a[(1, 2)] * a[(2, 1)])
                - a[(0, 1)] * (a[(1, 0)] * a[(2, 2)] - a[(1, 2)] * a[(2, 0)])
                + a[(0, 2)] * (a[(1, 0)] * a[(2, 1)] - a[(1, 1)] * a[(2, 0)])
        }
        4 => (0..4)
            .map(|j| {
                let s = if j % 2 == 0 { 1.0 } else { -1.0 };
                s * a[(0, j)] * det(&minor(a, 0, j))
            })
            .sum(),
        _ => a.clone().lu().determinant(),
    }
}

/// The matrix with row r and column c removed.
pub fn minor(a: &Mat, r: usize, c: usize) -> Mat {
    a.clone().remove_row(r).remove_column(c)
}

/// Determinant and adjugate (transpose of the cofactor matrix).
pub fn det_adj(a: &Mat) -> (f64, Mat) {
    let k = a.nrows();
    if k == 1 {
        return (a[(0, 0)], Mat::from_element(1, 1, 1.0));
    }
    let mut adj = Mat::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            let s = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
            adj[(j, i)] = s * det(&minor(a, i, j));
        }
    }
    // expansion along the first row reuses the cofactors
    let d = (0..k).map(|j| a[(0, j)] * adj[(j, 0)]).sum();
    (d, adj)
}

/// Inverse with a relative pivot check; None when numerically singular.
pub fn inv_checked(a: &Mat) -> Option<Mat> {
    let k = a.nrows();
    if k == 0 {
        return Some(Mat::zeros(0, 0));
    }
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !scale.is_finite() || scale == 0.0 {
        return None;
    }
    let lu = a.clone().lu();
    let u = lu.u();
    let min_piv = (0..k).fold(f64::INFINITY, |m, i| m.min(u[(i, i)].abs()));
    if min_piv <= 1e-14 * scale {
        return None;
    }
    lu.try_inverse()
}

/// Symmetric pseudo-inverse with relative eigenvalue cutoff; returns the rank too.
pub fn sym_pinv(a: &Mat, rel_cut: f64) -> (Mat, usize) {
    let sym = (a + a.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let top = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let k = a.nrows();
    let mut out = Mat::zeros(k, k);
    let mut rank = 0;
    for (j, &lam) in eig.eigenvalues.iter().enumerate() {
        if top > 0.0 && lam.abs() > rel_cut * top {
            rank += 1;
            let v = eig.eigenvectors.column(j);
            out += (v * v.transpose()) / lam;
        }
    }
    (out, rank)
}

/// x - mean(x): the within operator M_T applied to a vector.
pub fn demean(v: &Vector) -> Vector {
    let m = v.mean();
    v.map(|a| a - m)
}

/// Column-wise within operator on a T x p matrix.
pub fn demean_cols(a: &Mat) -> Mat {
    let mut out = a.clone();
    for mut c in out.column_iter_mut() {
        let m = c.mean();
        c.add_scalar_mut(-m);
    }
    out
}

/// The explicit T x T matrix I - tau tau'/T.
pub fn within_matrix(t: usize) -> Mat {
    Mat::identity(t, t) - Mat::from_element(t, t, 1.0 / t as f64)
}

pub fn symmetrize(a: &Mat) -> Mat {
    (a + a.transpose()) * 0.5
}
