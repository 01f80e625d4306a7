//! Objective diagnostics: the min-max Lagrangian and the similarity-matching
//! objective it is equivalent to.

use ndarray::{Array2, ArrayView2};

use crate::whitening::{pseudoinverse, sample_covariance};
use crate::{Error, Result};

/// `L(W, M, Y) = tr((2/T) YᵀMY − (4/T) YᵀWX) − tr(M² − 2 W C_xx Wᵀ)`.
///
/// Minimized over `W` at `W* = (1/T) Y Xᵀ C_xx⁺` and maximized over `M` at
/// `M* = (1/T) Y Yᵀ`.
pub fn lagrangian_value(
    w: ArrayView2<f64>,
    m: ArrayView2<f64>,
    y: ArrayView2<f64>,
    x: ArrayView2<f64>,
) -> Result<f64> {
    let (d, k) = w.dim();
    let t = x.ncols();
    if m.dim() != (d, d) {
        return Err(Error::shape(
            "lagrangian M",
            format!("({d}, {d})"),
            format!("{:?}", m.dim()),
        ));
    }
    if x.nrows() != k {
        return Err(Error::shape("lagrangian X rows", k, x.nrows()));
    }
    if y.dim() != (d, t) {
        return Err(Error::shape(
            "lagrangian Y",
            format!("({d}, {t})"),
            format!("{:?}", y.dim()),
        ));
    }
    let cov = sample_covariance(x)?.cov;
    Ok(lagrangian_with_cov(w, m, y, x, cov.view()))
}

pub(crate) fn lagrangian_with_cov(
    w: ArrayView2<f64>,
    m: ArrayView2<f64>,
    y: ArrayView2<f64>,
    x: ArrayView2<f64>,
    cov: ArrayView2<f64>,
) -> f64 {
    let t = x.ncols() as f64;
    let ymy = (&y * &m.dot(&y)).sum();
    let ywx = (&y * &w.dot(&x)).sum();
    let m_sq = (&m * &m.t()).sum();
    let wcw = (&w * &w.dot(&cov)).sum();
    2.0 / t * ymy - 4.0 / t * ywx - m_sq + 2.0 * wcw
}

/// `‖YᵀY − Xᵀ C_xx⁺ X‖²_F`.
pub fn nsm_objective(y: ArrayView2<f64>, x: ArrayView2<f64>, rank_tol: f64) -> Result<f64> {
    if y.ncols() != x.ncols() {
        return Err(Error::shape(
            "nsm_objective sample count",
            x.ncols(),
            y.ncols(),
        ));
    }
    let cov = sample_covariance(x)?.cov;
    let pinv = pseudoinverse(cov.view(), rank_tol)?;
    Ok(nsm_objective_with(y, x, pinv.view()))
}

/// Same as [`nsm_objective`] with a precomputed `C_xx⁺`.
///
/// Expands the square so that only `d×d`, `d×k` and `k×k` products are
/// formed, never the `T×T` Gram matrices:
/// `‖YYᵀ‖² − 2 tr(B P Bᵀ) + tr((P S)²)` with `B = Y Xᵀ`, `S = X Xᵀ`.
pub fn nsm_objective_with(y: ArrayView2<f64>, x: ArrayView2<f64>, pinv: ArrayView2<f64>) -> f64 {
    let yy = y.dot(&y.t());
    let b = y.dot(&x.t());
    let s = x.dot(&x.t());
    let ps: Array2<f64> = pinv.dot(&s);
    let quartic = (&yy * &yy).sum();
    let cross = (&b.dot(&pinv) * &b).sum();
    let constant = (&ps * &ps.t()).sum();
    (quartic - 2.0 * cross + constant).max(0.0)
}
