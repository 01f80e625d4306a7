//! Full-batch variant: alternate a projected-gradient solve for all outputs
//! `Y` with one gradient descent step on `W` and one ascent step on `M`.

use ndarray::{Array2, ArrayView2, Axis, Zip};

use super::dynamics::step_size;
use super::objective::nsm_objective_with;
use super::online::BioNicaState;
use super::params::Hyperparams;
use crate::whitening::{eigendecompose_psd, pseudoinverse_from, sample_covariance};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct OfflineConfig {
    pub outer_iters: usize,
    /// Stop the inner `Y` iteration once `‖ΔY‖_max` falls to this.
    pub y_inner_tol: f64,
    pub y_inner_max_iter: usize,
    pub rank_tol: f64,
}

impl Default for OfflineConfig {
    fn default() -> Self {
        Self {
            outer_iters: 500,
            y_inner_tol: 1e-6,
            y_inner_max_iter: 10_000,
            rank_tol: crate::whitening::DEFAULT_RANK_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OfflineResult {
    /// `d×T` nonnegative outputs from the last inner solve.
    pub y: Array2<f64>,
    pub w: Array2<f64>,
    pub m: Array2<f64>,
    /// Similarity-matching objective after each outer iteration.
    pub objective_trace: Vec<f64>,
    /// Whether each outer iteration's inner solve met `y_inner_tol`.
    pub inner_converged: Vec<bool>,
}

/// Runs the batch algorithm from the default initialization for `seed`
/// (see [`BioNicaState::init`]), with each row of `W` sign-flipped so that
/// it responds positively to the mean input. A row that is negative on every
/// sample would leave its output at zero for good.
pub fn offline_fit(
    x: ArrayView2<f64>,
    d: usize,
    p: &Hyperparams,
    cfg: &OfflineConfig,
    seed: u64,
) -> Result<OfflineResult> {
    let mut init = BioNicaState::init(d, x.nrows(), seed)?;
    if let Some(mean) = x.mean_axis(Axis(1)) {
        crate::baselines::orient_rows(&mut init.w, mean.view());
    }
    offline_fit_from(x, init.w, init.m, p, cfg)
}

pub fn offline_fit_from(
    x: ArrayView2<f64>,
    w0: Array2<f64>,
    m0: Array2<f64>,
    p: &Hyperparams,
    cfg: &OfflineConfig,
) -> Result<OfflineResult> {
    p.validate()?;
    if !(cfg.y_inner_tol > 0.0) || cfg.y_inner_max_iter == 0 {
        return Err(Error::InvalidConfig(
            "offline inner loop needs y_inner_tol > 0 and y_inner_max_iter >= 1".into(),
        ));
    }
    let (d, k) = w0.dim();
    if x.nrows() != k {
        return Err(Error::shape("offline_fit input rows", k, x.nrows()));
    }
    let t = x.ncols() as f64;
    let cov = sample_covariance(x)?;
    let eig = eigendecompose_psd(cov.cov.view(), cfg.rank_tol)?;
    if eig.rank() < d {
        return Err(Error::RankDeficient {
            needed: d,
            found: eig.rank(),
        });
    }
    let pinv = pseudoinverse_from(&eig);

    let mut w = w0;
    let mut m = m0;
    let mut y = Array2::<f64>::zeros((d, x.ncols()));
    let mut trace = Vec::with_capacity(cfg.outer_iters);
    let mut converged = Vec::with_capacity(cfg.outer_iters);

    for iter in 1..=cfg.outer_iters {
        let drive = w.dot(&x);
        let gamma = step_size(p.gamma, m.view());
        let mut inner_ok = false;
        for _ in 0..cfg.y_inner_max_iter {
            let my = m.dot(&y);
            let mut delta = 0.0f64;
            Zip::from(&mut y)
                .and(&drive)
                .and(&my)
                .for_each(|yv, &c, &q| {
                    let v = (*yv + gamma * (c - q)).max(0.0);
                    delta = delta.max((v - *yv).abs());
                    *yv = v;
                });
            if !delta.is_finite() {
                return Err(Error::Numerical {
                    step: iter as u64,
                    message: "batch output iteration diverged".into(),
                });
            }
            if delta <= cfg.y_inner_tol {
                inner_ok = true;
                break;
            }
        }
        converged.push(inner_ok);

        let eta = p.eta_at(iter as u64);
        if eta != 0.0 {
            let yx = y.dot(&x.t()) / t;
            let wc = w.dot(&cov.cov);
            w.scaled_add(2.0 * eta, &(yx - wc));
            let yy = y.dot(&y.t()) / t;
            let rate = eta / p.tau;
            m = &m + &((yy - &m) * rate);
            let sym = (&m + &m.t()) * 0.5;
            m = sym;
        }
        if w.iter().chain(m.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Numerical {
                step: iter as u64,
                message: "weights became non-finite".into(),
            });
        }
        trace.push(nsm_objective_with(y.view(), x, pinv.view()));
    }

    Ok(OfflineResult {
        y,
        w,
        m,
        objective_trace: trace,
        inner_converged: converged,
    })
}
