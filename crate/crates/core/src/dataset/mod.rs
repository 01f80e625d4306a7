//! Sources, mixing, and data interchange.
//!
//! Matrices use a column-per-sample layout: a `d×T` source matrix holds one
//! `d`-dimensional source vector per column.

mod csv;
mod pgm;

pub(crate) use self::csv::format_f64;
pub use self::csv::{read_matrix_csv, write_matrix_csv};
pub use self::pgm::{load_pgm, parse_pgm, rescale_to_u8, write_pgm, ImagePatch};

use ndarray::{Array1, Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::linalg;
use crate::rng::{substream, Stream};
use crate::{Error, Result};

/// Upper bound that gives the sparse-uniform source unit variance when
/// `zero_prob = 1/2`: `upper² · 5/48 = 1`.
pub const UNIT_VARIANCE_UPPER: f64 = 3.098_386_676_965_933_5;

const MIXING_RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct SourceConfig {
    pub d: usize,
    pub samples: usize,
    /// Probability that an entry is exactly zero.
    pub zero_prob: f64,
    /// Nonzero entries are uniform on `(0, upper)`.
    pub upper: f64,
    pub seed: u64,
}

impl SourceConfig {
    pub fn new(d: usize, samples: usize, seed: u64) -> Self {
        Self {
            d,
            samples,
            zero_prob: 0.5,
            upper: UNIT_VARIANCE_UPPER,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.samples == 0 {
            return Err(Error::InvalidConfig(format!(
                "source count and sample count must be >= 1 (d={}, T={})",
                self.d, self.samples
            )));
        }
        if !(0.0..1.0).contains(&self.zero_prob) {
            return Err(Error::InvalidConfig(format!(
                "zero_prob must lie in [0, 1), got {}",
                self.zero_prob
            )));
        }
        if !(self.upper > 0.0 && self.upper.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "upper must be positive and finite, got {}",
                self.upper
            )));
        }
        Ok(())
    }

    /// Population mean of one source, `upper·(1 − zero_prob)/2`.
    pub fn population_mean(&self) -> f64 {
        self.upper * (1.0 - self.zero_prob) / 2.0
    }

    /// Population variance of one source.
    pub fn population_variance(&self) -> f64 {
        let keep = 1.0 - self.zero_prob;
        let second_moment = keep * self.upper * self.upper / 3.0;
        second_moment - self.population_mean().powi(2)
    }
}

/// Nonnegative `d×T` source matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceMatrix(Array2<f64>);

impl SourceMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("source matrix"));
        }
        if values.iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidConfig(
                "source matrix entries must be nonnegative".into(),
            ));
        }
        Ok(Self(values))
    }

    /// Builds a source matrix from per-source rows, e.g. from [`image_to_source`].
    pub fn from_rows(rows: &[Array1<f64>]) -> Result<Self> {
        let len = rows.first().map_or(0, |r| r.len());
        if let Some(bad) = rows.iter().find(|r| r.len() != len) {
            return Err(Error::shape("source rows", len, bad.len()));
        }
        let mut values = Array2::zeros((rows.len(), len));
        for (mut dst, src) in values.rows_mut().into_iter().zip(rows) {
            dst.assign(src);
        }
        Self::new(values)
    }

    pub fn sources(&self) -> usize {
        self.0.nrows()
    }

    pub fn samples(&self) -> usize {
        self.0.ncols()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }
}

/// Full-column-rank `k×d` mixing matrix, `k ≥ d`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingMatrix(Array2<f64>);

impl MixingMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        let (k, d) = values.dim();
        if k < d || d == 0 {
            return Err(Error::InvalidConfig(format!(
                "mixing matrix must be k×d with k >= d >= 1, got {k}×{d}"
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("mixing matrix"));
        }
        let rank = linalg::numerical_rank(values.view(), MIXING_RANK_TOL);
        if rank < d {
            return Err(Error::RankDeficient {
                needed: d,
                found: rank,
            });
        }
        Ok(Self(values))
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }
}

/// `k×T` mixture matrix `X = A·S`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureMatrix(Array2<f64>);

impl MixtureMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("mixture matrix"));
        }
        Ok(Self(values))
    }

    pub fn channels(&self) -> usize {
        self.0.nrows()
    }

    pub fn samples(&self) -> usize {
        self.0.ncols()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }
}

/// Draws i.i.d. sparse-uniform sources: each entry is 0 with probability
/// `zero_prob`, otherwise uniform on the open interval `(0, upper)`.
pub fn sample_sparse_uniform(cfg: &SourceConfig) -> Result<SourceMatrix> {
    cfg.validate()?;
    let mut rng = substream(cfg.seed, Stream::Sources);
    let mut values = Array2::zeros((cfg.d, cfg.samples));
    for mut column in values.columns_mut() {
        for v in column.iter_mut() {
            if rng.random::<f64>() >= cfg.zero_prob {
                *v = loop {
                    let u = rng.random::<f64>() * cfg.upper;
                    if u > 0.0 {
                        break u;
                    }
                };
            }
        }
    }
    Ok(SourceMatrix(values))
}

/// `k×d` matrix with i.i.d. standard normal entries, redrawn until it has
/// full column rank.
pub fn random_mixing_matrix(k: usize, d: usize, seed: u64) -> Result<MixingMatrix> {
    if d == 0 || k < d {
        return Err(Error::InvalidConfig(format!(
            "mixing matrix needs k >= d >= 1, got k={k}, d={d}"
        )));
    }
    let mut rng = substream(seed, Stream::Mixing);
    loop {
        let values = Array2::from_shape_simple_fn((k, d), || rng.sample::<f64, _>(StandardNormal));
        match MixingMatrix::new(values) {
            Ok(a) => return Ok(a),
            Err(Error::RankDeficient { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
}

pub fn mix(a: &MixingMatrix, s: &SourceMatrix) -> Result<MixtureMatrix> {
    if a.0.ncols() != s.0.nrows() {
        return Err(Error::shape("mix", a.0.ncols(), s.0.nrows()));
    }
    Ok(MixtureMatrix(a.0.dot(&s.0)))
}

/// Turns an image into one well-grounded, unit-variance source row.
///
/// Pixels are flattened row-major, shifted so the minimum is exactly 0 and
/// divided by the population (1/N) standard deviation.
pub fn image_to_source(img: &ImagePatch) -> Result<Array1<f64>> {
    let flat = Array1::from_iter(img.pixels.iter().copied());
    let min = flat.iter().copied().fold(f64::INFINITY, f64::min);
    let shifted = flat.mapv(|v| v - min);
    let n = shifted.len() as f64;
    let mean = shifted.sum() / n;
    let var = shifted.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if var <= 0.0 {
        return Err(Error::ZeroVariance(format!(
            "image '{}' is constant",
            img.source_id
        )));
    }
    let std = var.sqrt();
    Ok(shifted.mapv(|v| v / std))
}

/// Concatenation of `epochs` independent uniform permutations of `0..samples`.
pub fn shuffled_epoch_stream(samples: usize, epochs: usize, seed: u64) -> Result<Vec<usize>> {
    if samples == 0 || epochs == 0 {
        return Err(Error::InvalidConfig(format!(
            "epoch stream needs T >= 1 and epochs >= 1, got T={samples}, epochs={epochs}"
        )));
    }
    let mut rng = substream(seed, Stream::Shuffle);
    let mut order = Vec::with_capacity(samples * epochs);
    let mut perm: Vec<usize> = (0..samples).collect();
    for _ in 0..epochs {
        perm.shuffle(&mut rng);
        order.extend_from_slice(&perm);
    }
    Ok(order)
}
