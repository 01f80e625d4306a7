//! Noncentered whitening and the covariance pseudoinverse.
//!
//! Noncentered whitening is a linear map `h = F x` whose output has identity
//! (centered) covariance while the mean is NOT subtracted, so nonnegative
//! sources stay grounded after the map. With `C_xx = U Λ Uᵀ` restricted to
//! its positive eigenvalues, every such `F` has the form `Q Λ^{-1/2} Uᵀ`;
//! this module fixes `Q = I`. The same eigenpairs give the Moore-Penrose
//! pseudoinverse `C_xx⁺ = U Λ⁻¹ Uᵀ = FᵀF`, which is how the similarity
//! objective avoids an explicit whitening stage.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::linalg;
use crate::{Error, Result};

/// Default relative eigenvalue cutoff.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

const SYMMETRY_TOL: f64 = 1e-10;

/// Sample mean and 1/T-normalized covariance of column samples.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceSummary {
    pub mean: Array1<f64>,
    pub cov: Array2<f64>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenStructure {
    /// Retained eigenvalues, descending, all `> rank_tol · λ_max`.
    pub eigenvalues: Array1<f64>,
    /// Matching orthonormal eigenvectors as columns (`k×r`).
    pub eigenvectors: Array2<f64>,
    pub rank_tol: f64,
}

impl EigenStructure {
    pub fn rank(&self) -> usize {
        self.eigenvalues.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WhiteningTransform {
    /// `d×k` whitening matrix.
    pub matrix: Array2<f64>,
    /// Mean of the data the transform was fit on. Diagnostic only: it is
    /// never subtracted.
    pub mean: Array1<f64>,
    pub eigen: EigenStructure,
}

impl WhiteningTransform {
    pub fn output_dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.matrix.ncols()
    }
}

/// Mean and covariance of the columns of `x` (`k×T`, `T ≥ 2`).
pub fn sample_covariance(x: ArrayView2<f64>) -> Result<CovarianceSummary> {
    let count = x.ncols();
    if count < 2 {
        return Err(Error::InvalidConfig(format!(
            "covariance needs at least 2 samples, got {count}"
        )));
    }
    let mean = x.mean_axis(Axis(1)).expect("nonempty");
    let centered = &x - &mean.view().insert_axis(Axis(1));
    let mut cov = centered.dot(&centered.t()) / count as f64;
    let k = cov.nrows();
    for i in 0..k {
        for j in (i + 1)..k {
            let v = 0.5 * (cov[[i, j]] + cov[[j, i]]);
            cov[[i, j]] = v;
            cov[[j, i]] = v;
        }
    }
    Ok(CovarianceSummary { mean, cov, count })
}

/// Eigenpairs of a symmetric PSD matrix with `λ > rank_tol · λ_max`.
pub fn eigendecompose_psd(c: ArrayView2<f64>, rank_tol: f64) -> Result<EigenStructure> {
    if c.nrows() != c.ncols() {
        return Err(Error::shape(
            "eigendecompose_psd",
            "square matrix",
            format!("{:?}", c.dim()),
        ));
    }
    let scale = linalg::max_abs(c).max(f64::MIN_POSITIVE);
    let asym = linalg::max_asymmetry(c);
    if asym > SYMMETRY_TOL * scale.max(1.0) {
        return Err(Error::NotSymmetric(asym));
    }
    let (values, vectors) = linalg::symmetric_eigen(c);
    let top = values.first().copied().unwrap_or(0.0);
    if !(top > 0.0) {
        return Err(Error::RankDeficient {
            needed: 1,
            found: 0,
        });
    }
    let keep = values.iter().take_while(|&&v| v > rank_tol * top).count();
    Ok(EigenStructure {
        eigenvalues: values.slice(ndarray::s![..keep]).to_owned(),
        eigenvectors: vectors.slice(ndarray::s![.., ..keep]).to_owned(),
        rank_tol,
    })
}

/// Moore-Penrose pseudoinverse `U Λ⁻¹ Uᵀ` of a symmetric PSD matrix.
pub fn pseudoinverse(c: ArrayView2<f64>, rank_tol: f64) -> Result<Array2<f64>> {
    let eig = eigendecompose_psd(c, rank_tol)?;
    Ok(pseudoinverse_from(&eig))
}

pub fn pseudoinverse_from(eig: &EigenStructure) -> Array2<f64> {
    let u = &eig.eigenvectors;
    let scaled = u * &eig.eigenvalues.mapv(f64::recip).view().insert_axis(Axis(0));
    scaled.dot(&u.t())
}

/// `F = Λ_d^{-1/2} U_dᵀ` from the top `d` eigenpairs of the covariance.
pub fn whitening_transform(
    cov: &CovarianceSummary,
    d: usize,
    rank_tol: f64,
) -> Result<WhiteningTransform> {
    if d == 0 {
        return Err(Error::InvalidConfig(
            "whitening dimension must be >= 1".into(),
        ));
    }
    let eig = eigendecompose_psd(cov.cov.view(), rank_tol)?;
    if eig.rank() < d {
        return Err(Error::RankDeficient {
            needed: d,
            found: eig.rank(),
        });
    }
    let mut matrix = eig.eigenvectors.slice(ndarray::s![.., ..d]).t().to_owned();
    for (mut row, &lambda) in matrix.rows_mut().into_iter().zip(eig.eigenvalues.iter()) {
        row.mapv_inplace(|v| v / lambda.sqrt());
    }
    Ok(WhiteningTransform {
        matrix,
        mean: cov.mean.clone(),
        eigen: eig,
    })
}

/// Fits a whitening transform on `x` itself.
pub fn fit_whitening(x: ArrayView2<f64>, d: usize, rank_tol: f64) -> Result<WhiteningTransform> {
    whitening_transform(&sample_covariance(x)?, d, rank_tol)
}

/// `H = F X` with no mean subtraction.
pub fn apply_whitening(w: &WhiteningTransform, x: ArrayView2<f64>) -> Result<Array2<f64>> {
    if x.nrows() != w.input_dim() {
        return Err(Error::shape("apply_whitening", w.input_dim(), x.nrows()));
    }
    Ok(w.matrix.dot(&x))
}
