//! End-to-end pipelines: synthetic sparse sources and mixed images.
//!
//! Everything here is a pure function of its configuration and seed, so the
//! CLI and the acceptance tests share one code path.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2, Axis};

use crate::baselines::run_nnpca;
use crate::dataset::{
    format_f64, image_to_source, mix, random_mixing_matrix, sample_sparse_uniform,
    shuffled_epoch_stream, ImagePatch, MixingMatrix, MixtureMatrix, SourceConfig, SourceMatrix,
};
use crate::metrics::{
    best_permutation, correlation_match, error_trajectory, ErrorTrajectory, Permutation,
    PermutationSearch,
};
use crate::nica::{offline_fit, BioNicaState, Hyperparams, LearningRate, OfflineConfig, StepSize};
use crate::whitening::{WhiteningTransform, DEFAULT_RANK_TOL};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    BioNica,
    Nnpca,
    Offline,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::BioNica => "bio-nica",
            Algorithm::Nnpca => "nnpca",
            Algorithm::Offline => "offline",
        })
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bio-nica" => Ok(Algorithm::BioNica),
            "nnpca" => Ok(Algorithm::Nnpca),
            "offline" => Ok(Algorithm::Offline),
            _ => Err(Error::InvalidConfig(format!(
                "algo must be one of bio-nica, nnpca, offline; got {s:?}"
            ))),
        }
    }
}

/// Hyperparameters used for the sparse-source experiments: the library
/// defaults, `η_t = 0.015 / (1 + 0.001 t)`, `τ = 0.1` and a
/// Gershgorin-adaptive output step.
pub fn sparse_hyperparams() -> Hyperparams {
    Hyperparams::default()
}

/// Learning-rate schedule for the Nonnegative PCA baseline.
pub fn nnpca_schedule() -> LearningRate {
    LearningRate::Decay {
        eta0: 0.05,
        decay: 1e-3,
    }
}

/// Hyperparameters for the batch algorithm.
pub fn offline_hyperparams() -> Hyperparams {
    Hyperparams {
        gamma: StepSize::Adaptive,
        eta: LearningRate::Constant(0.1),
        tau: 0.2,
        ..Hyperparams::default()
    }
}

/// Hyperparameters for the image experiment; the sparse-source defaults
/// carry over unchanged.
pub fn image_hyperparams() -> Hyperparams {
    Hyperparams::default()
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub sources: SourceMatrix,
    pub mixing: MixingMatrix,
    pub mixture: MixtureMatrix,
}

/// Sparse-uniform sources, a `k×d` Gaussian mixing matrix and their product.
/// Sources and mixing draw from separate streams of the same seed.
pub fn generate(d: usize, k: usize, samples: usize, seed: u64) -> Result<SyntheticData> {
    let mixing = random_mixing_matrix(k, d, seed)?;
    let sources = sample_sparse_uniform(&SourceConfig::new(d, samples, seed))?;
    let mixture = mix(&mixing, &sources)?;
    Ok(SyntheticData {
        sources,
        mixing,
        mixture,
    })
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub algo: Algorithm,
    pub d: usize,
    pub seed: u64,
    pub hyper: Hyperparams,
    pub nnpca_eta: LearningRate,
    pub offline: OfflineConfig,
    pub rank_tol: f64,
}

impl RunConfig {
    pub fn new(algo: Algorithm, d: usize, seed: u64) -> Self {
        Self {
            algo,
            d,
            seed,
            hyper: match algo {
                Algorithm::Offline => offline_hyperparams(),
                _ => sparse_hyperparams(),
            },
            nnpca_eta: nnpca_schedule(),
            offline: OfflineConfig::default(),
            rank_tol: DEFAULT_RANK_TOL,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    /// `d×T` outputs in sample order.
    pub y: Array2<f64>,
    /// Final network state (online Bio-NICA only).
    pub state: Option<BioNicaState>,
    /// Offline whitening fit (Nonnegative PCA only).
    pub whitening: Option<WhiteningTransform>,
    /// Per-outer-iteration objective (batch algorithm only).
    pub objective_trace: Option<Vec<f64>>,
    /// Samples whose output dynamics hit the iteration cap.
    pub unconverged: usize,
}

/// Runs one algorithm over the columns of `x` in order.
pub fn run(x: ArrayView2<f64>, cfg: &RunConfig) -> Result<RunOutput> {
    match cfg.algo {
        Algorithm::BioNica => {
            cfg.hyper.validate()?;
            let mut state = BioNicaState::init(cfg.d, x.nrows(), cfg.seed)?;
            let mut y = Array2::zeros((cfg.d, x.ncols()));
            let mut unconverged = 0;
            for (col, mut dst) in x.columns().into_iter().zip(y.columns_mut()) {
                let out = state.step(col, &cfg.hyper)?;
                unconverged += usize::from(!out.converged);
                dst.assign(&out.y);
            }
            Ok(RunOutput {
                y,
                state: Some(state),
                whitening: None,
                objective_trace: None,
                unconverged,
            })
        }
        Algorithm::Nnpca => {
            let r = run_nnpca(x, cfg.d, cfg.nnpca_eta, cfg.seed, cfg.rank_tol)?;
            Ok(RunOutput {
                y: r.y,
                state: None,
                whitening: Some(r.whitening),
                objective_trace: None,
                unconverged: 0,
            })
        }
        Algorithm::Offline => {
            let mut offline = cfg.offline.clone();
            offline.rank_tol = cfg.rank_tol;
            let r = offline_fit(x, cfg.d, &cfg.hyper, &offline, cfg.seed)?;
            let unconverged = r.inner_converged.iter().filter(|&&c| !c).count();
            Ok(RunOutput {
                y: r.y,
                state: None,
                whitening: None,
                objective_trace: Some(r.objective_trace),
                unconverged,
            })
        }
    }
}

/// Permutation chosen on the whole run, then the cumulative error trajectory.
pub fn evaluate(s: ArrayView2<f64>, y: ArrayView2<f64>, stride: usize) -> Result<ErrorTrajectory> {
    let (perm, _) = best_permutation(s, y, PermutationSearch::Auto)?;
    error_trajectory(s, y, &perm, stride)
}

#[derive(Debug, Clone)]
pub struct ImageConfig {
    /// Number of mixture channels.
    pub k: usize,
    pub epochs: usize,
    pub seed: u64,
    pub hyper: Hyperparams,
}

impl ImageConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            k: 6,
            epochs: 15,
            seed,
            hyper: image_hyperparams(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ImageOutcome {
    pub sources: SourceMatrix,
    pub mixing: MixingMatrix,
    pub mixture: MixtureMatrix,
    /// Presentation order: `epochs` shuffled passes over the pixels.
    pub order: Vec<usize>,
    /// `d×(T·epochs)` outputs in presentation order.
    pub y_stream: Array2<f64>,
    /// Outputs from the last epoch, put back in pixel order (`d×T`).
    pub y_final: Array2<f64>,
    pub permutation: Permutation,
    pub correlations: Vec<f64>,
    pub state: BioNicaState,
}

/// Builds one source per image, mixes with a random `k×d` matrix and streams
/// shuffled epochs through the online network.
pub fn run_images(images: &[ImagePatch], cfg: &ImageConfig) -> Result<ImageOutcome> {
    if images.is_empty() {
        return Err(Error::InvalidConfig("need at least one image".into()));
    }
    let shape = images[0].pixels.dim();
    if let Some(bad) = images.iter().find(|im| im.pixels.dim() != shape) {
        return Err(Error::shape(
            "image sizes",
            format!("{shape:?}"),
            format!("{:?} ({})", bad.pixels.dim(), bad.source_id),
        ));
    }
    cfg.hyper.validate()?;
    let rows = images
        .iter()
        .map(image_to_source)
        .collect::<Result<Vec<_>>>()?;
    let sources = SourceMatrix::from_rows(&rows)?;
    let d = sources.sources();
    let samples = sources.samples();
    let mixing = random_mixing_matrix(cfg.k, d, cfg.seed)?;
    let mixture = mix(&mixing, &sources)?;
    let order = shuffled_epoch_stream(samples, cfg.epochs, cfg.seed)?;

    let mut state = BioNicaState::init(d, cfg.k, cfg.seed)?;
    let x = mixture.view();
    let mut y_stream = Array2::zeros((d, order.len()));
    let mut y_final = Array2::zeros((d, samples));
    let last_epoch = (cfg.epochs - 1) * samples;
    for (n, &idx) in order.iter().enumerate() {
        let out = state.step(x.column(idx), &cfg.hyper)?;
        y_stream.column_mut(n).assign(&out.y);
        if n >= last_epoch {
            y_final.column_mut(idx).assign(&out.y);
        }
    }
    let (permutation, _) =
        best_permutation(sources.view(), y_final.view(), PermutationSearch::Auto)?;
    let correlations = correlation_match(sources.view(), y_final.view(), &permutation)?;
    Ok(ImageOutcome {
        sources,
        mixing,
        mixture,
        order,
        y_stream,
        y_final,
        permutation,
        correlations,
        state,
    })
}

/// Cumulative error over the whole presentation stream, using the
/// permutation picked on the final epoch.
pub fn image_trajectory(outcome: &ImageOutcome, stride: usize) -> Result<ErrorTrajectory> {
    let s_stream = outcome.sources.view().select(Axis(1), &outcome.order);
    error_trajectory(
        s_stream.view(),
        outcome.y_stream.view(),
        &outcome.permutation,
        stride,
    )
}

/// One row of a multi-run summary: sample mean and standard deviation of
/// `Error(t)` across runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryRow {
    pub t: u64,
    pub mean: f64,
    pub std: f64,
}

/// Pointwise mean and (n−1)-normalized standard deviation. All trajectories
/// must share the same time grid.
pub fn summarize(runs: &[ErrorTrajectory]) -> Result<Vec<SummaryRow>> {
    let Some(first) = runs.first() else {
        return Err(Error::InvalidConfig(
            "summary needs at least one run".into(),
        ));
    };
    if let Some(bad) = runs.iter().find(|r| r.times != first.times) {
        return Err(Error::shape(
            "summary time grid",
            first.times.len(),
            bad.times.len(),
        ));
    }
    let n = runs.len() as f64;
    Ok(first
        .times
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let mean = runs.iter().map(|r| r.errors[i]).sum::<f64>() / n;
            let var = if runs.len() > 1 {
                runs.iter()
                    .map(|r| (r.errors[i] - mean).powi(2))
                    .sum::<f64>()
                    / (n - 1.0)
            } else {
                0.0
            };
            SummaryRow {
                t,
                mean,
                std: var.sqrt(),
            }
        })
        .collect())
}

pub fn write_summary_csv(rows: &[SummaryRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut body = String::from("t,mean,std\n");
    for r in rows {
        body.push_str(&r.t.to_string());
        body.push(',');
        format_f64(&mut body, r.mean);
        body.push(',');
        format_f64(&mut body, r.std);
        body.push('\n');
    }
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}
