//! Nonnegative PCA baseline.
//!
//! A rectified nonlinear-PCA subspace rule run on inputs that were whitened
//! offline (noncentered): `y = [V h]₊`, `V += η_t y (h − Vᵀ y)ᵀ`. It searches
//! for the rotation that maps whitened data into the nonnegative orthant.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};

use crate::linalg;
use crate::nica::LearningRate;
use crate::rng::{substream, Stream};
use crate::whitening::{apply_whitening, fit_whitening, WhiteningTransform};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct NnpcaState {
    pub v: Array2<f64>,
    pub t: u64,
    pub eta: LearningRate,
}

impl NnpcaState {
    pub fn new(v: Array2<f64>, eta: LearningRate) -> Result<Self> {
        if v.nrows() != v.ncols() || v.nrows() == 0 {
            return Err(Error::shape(
                "nnpca weights",
                "nonempty square",
                format!("{:?}", v.dim()),
            ));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("nnpca weights"));
        }
        Ok(Self { v, t: 0, eta })
    }

    /// Random orthogonal initial rotation.
    pub fn init(d: usize, eta: LearningRate, seed: u64) -> Result<Self> {
        let mut rng = substream(seed, Stream::RotationInit);
        Self::new(linalg::random_orthogonal(d, &mut rng), eta)
    }

    pub fn step(&mut self, h: ArrayView1<f64>) -> Result<ndarray::Array1<f64>> {
        nnpca_step(self, h)
    }
}

pub fn nnpca_step(state: &mut NnpcaState, h: ArrayView1<f64>) -> Result<ndarray::Array1<f64>> {
    let d = state.v.nrows();
    if h.len() != d {
        return Err(Error::shape("nnpca_step input", d, h.len()));
    }
    let step = state.t + 1;
    let y = state.v.dot(&h).mapv(|v| v.max(0.0));
    let eta = state.eta.at(step);
    if eta != 0.0 {
        let residual = &h - &state.v.t().dot(&y);
        for i in 0..d {
            for j in 0..d {
                state.v[[i, j]] += eta * y[i] * residual[j];
            }
        }
    }
    if y.iter().chain(state.v.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Numerical {
            step,
            message: "nonnegative PCA weights became non-finite".into(),
        });
    }
    state.t = step;
    Ok(y)
}

/// Flips the sign of every row of `v` whose response to `mean` is negative.
///
/// A row with `vᵢ·h ≤ 0` on every input never fires and the rule never moves
/// it, so a random rotation can leave a unit dead from the first sample.
/// Sign flips keep `v` orthogonal.
pub fn orient_rows(v: &mut Array2<f64>, mean: ArrayView1<f64>) {
    for mut row in v.rows_mut() {
        if row.dot(&mean) < 0.0 {
            row.mapv_inplace(|x| -x);
        }
    }
}

#[derive(Debug, Clone)]
pub struct NnpcaRun {
    /// Whitening fit on the full input before streaming.
    pub whitening: WhiteningTransform,
    /// `d×T` outputs, one column per streamed sample.
    pub y: Array2<f64>,
    pub state: NnpcaState,
}

/// Fits the whitening on all of `x` first, orients the random initial
/// rotation with [`orient_rows`], then streams the whitened samples through
/// [`nnpca_step`] in column order.
pub fn run_nnpca(
    x: ArrayView2<f64>,
    d: usize,
    eta: LearningRate,
    seed: u64,
    rank_tol: f64,
) -> Result<NnpcaRun> {
    let whitening = fit_whitening(x, d, rank_tol)?;
    let h = apply_whitening(&whitening, x)?;
    let mut state = NnpcaState::init(d, eta, seed)?;
    if let Some(mean) = h.mean_axis(Axis(1)) {
        orient_rows(&mut state.v, mean.view());
    }
    let mut y = Array2::zeros((d, x.ncols()));
    for (col, mut dst) in h.columns().into_iter().zip(y.columns_mut()) {
        dst.assign(&nnpca_step(&mut state, col)?);
    }
    Ok(NnpcaRun {
        whitening,
        y,
        state,
    })
}
