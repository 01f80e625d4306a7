//! Rectified recurrent dynamics that compute the network output.
//!
//! For a projection `c = W x` and lateral weights `M ≻ 0`, the output is the
//! solution of the nonnegative quadratic program
//! `min_{y ≥ 0} ½ yᵀ M y − cᵀ y`, reached by projected gradient steps
//! `y ← [y + γ (c − M y)]₊`.

use ndarray::{Array1, ArrayView1, ArrayView2};

use super::params::{Hyperparams, StepSize};
use crate::linalg;
use crate::{Error, Result};

/// Safety factor for the adaptive step, `γ = ADAPTIVE_STEP / g(M)`.
pub const ADAPTIVE_STEP: f64 = 1.8;

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    /// Nonnegative network output.
    pub y: Array1<f64>,
    /// Feedforward projection `W x`.
    pub c: Array1<f64>,
    pub dyn_iters: usize,
    pub converged: bool,
}

pub(crate) fn step_size(gamma: StepSize, m: ArrayView2<f64>) -> f64 {
    match gamma {
        StepSize::Fixed(g) => g,
        StepSize::Adaptive => ADAPTIVE_STEP / linalg::gershgorin_bound(m).max(f64::MIN_POSITIVE),
    }
}

/// Iterates the rectified dynamics from `y0` (zeros when `None`) until the
/// sup-norm change drops to `p.dyn_tol` or `p.dyn_max_iter` is reached.
///
/// A non-positive-definite `M` shows up as divergence; the iteration stops
/// and reports `converged = false` with whatever (possibly non-finite) state
/// it reached.
pub fn fast_dynamics(
    c: ArrayView1<f64>,
    m: ArrayView2<f64>,
    p: &Hyperparams,
    y0: Option<ArrayView1<f64>>,
) -> Result<StepOutput> {
    let d = c.len();
    if m.dim() != (d, d) {
        return Err(Error::shape(
            "fast_dynamics",
            format!("({d}, {d})"),
            format!("{:?}", m.dim()),
        ));
    }
    if let Some(y0) = &y0 {
        if y0.len() != d {
            return Err(Error::shape("fast_dynamics initial output", d, y0.len()));
        }
    }
    if c.iter().any(|v| !v.is_finite()) || m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("fast dynamics input"));
    }
    let gamma = step_size(p.gamma, m);
    let m = m.as_standard_layout();
    let m = m.as_slice().expect("standard layout");
    let c_vec = c.to_vec();
    let mut y: Vec<f64> = match y0 {
        Some(y0) => y0.iter().map(|v| v.max(0.0)).collect(),
        None => vec![0.0; d],
    };
    let mut next = vec![0.0; d];

    let mut iters = 0;
    let mut converged = false;
    while iters < p.dyn_max_iter {
        iters += 1;
        let mut delta = 0.0f64;
        for i in 0..d {
            let row = &m[i * d..(i + 1) * d];
            let my: f64 = row.iter().zip(&y).map(|(a, b)| a * b).sum();
            let v = (y[i] + gamma * (c_vec[i] - my)).max(0.0);
            delta = delta.max((v - y[i]).abs());
            next[i] = v;
        }
        std::mem::swap(&mut y, &mut next);
        if !delta.is_finite() {
            break;
        }
        if delta <= p.dyn_tol {
            converged = true;
            break;
        }
    }

    Ok(StepOutput {
        y: Array1::from(y),
        c: c.to_owned(),
        dyn_iters: iters,
        converged,
    })
}

/// Largest violation of the KKT conditions of `min_{y≥0} ½yᵀMy − cᵀy`:
/// `y ≥ 0`, `(My − c)_i ≥ 0` where `y_i = 0`, `(My − c)_i = 0` where `y_i > 0`.
pub fn kkt_violation(y: ArrayView1<f64>, c: ArrayView1<f64>, m: ArrayView2<f64>) -> f64 {
    let grad = m.dot(&y) - c;
    y.iter()
        .zip(grad.iter())
        .map(|(&yi, &gi)| {
            if yi < 0.0 {
                -yi
            } else if yi == 0.0 {
                (-gi).max(0.0)
            } else {
                gi.abs()
            }
        })
        .fold(0.0, f64::max)
}

/// KKT residual guaranteed once the iteration stops on `dyn_tol`: the last
/// step bounds the gradient on the support by `dyn_tol / γ`, and moving to
/// the new iterate adds at most `‖M‖_∞ · dyn_tol`.
pub fn kkt_tolerance(p: &Hyperparams, m: ArrayView2<f64>) -> f64 {
    (1.0 / step_size(p.gamma, m) + linalg::gershgorin_bound(m)) * p.dyn_tol
}
