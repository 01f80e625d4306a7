//! End-to-end acceptance checks. Runs without the libtest harness so every
//! criterion prints exactly one PASS/WARN/FAIL line; exits nonzero if any
//! criterion fails.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use ndarray::{s, Array1, Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use bionica::dataset::load_pgm;
use bionica::experiment::{self, image_trajectory, run_images, Algorithm, ImageConfig, RunConfig};
use bionica::linalg::{max_abs_diff, min_eigenvalue};
use bionica::metrics::ErrorTrajectory;
use bionica::nica::{
    fast_dynamics, lagrangian_value, BioNicaState, Hyperparams, LearningRate, StepSize,
};
use bionica::whitening::{
    apply_whitening, fit_whitening, pseudoinverse, sample_covariance, DEFAULT_RANK_TOL,
};

#[derive(Clone, Copy, PartialEq)]
enum Verdict {
    Pass,
    Warn,
    Fail,
}

struct Outcome {
    verdict: Verdict,
    detail: String,
}

impl Outcome {
    fn check(ok: bool, detail: String) -> Self {
        let verdict = if ok { Verdict::Pass } else { Verdict::Fail };
        Outcome { verdict, detail }
    }
}

fn median(v: &[f64]) -> f64 {
    let mut v = v.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

// 1 and 2 share their instances.
fn whitening_instances() -> Vec<Array2<f64>> {
    (0..5)
        .map(|seed| {
            experiment::generate(3, 3, 10_000, 100 + seed)
                .unwrap()
                .mixture
                .view()
                .to_owned()
        })
        .collect()
}

fn criterion_whitening(xs: &[Array2<f64>]) -> Outcome {
    let start = Instant::now();
    let eye = Array2::<f64>::eye(3);
    let (mut hh, mut fcf) = (0.0f64, 0.0f64);
    for x in xs {
        let w = fit_whitening(x.view(), 3, DEFAULT_RANK_TOL).unwrap();
        let h = apply_whitening(&w, x.view()).unwrap();
        let c_hh = sample_covariance(h.view()).unwrap().cov;
        hh = hh.max(max_abs_diff(c_hh.view(), eye.view()));
        let c_xx = sample_covariance(x.view()).unwrap().cov;
        let f = &w.matrix;
        fcf = fcf.max(max_abs_diff(f.dot(&c_xx).dot(&f.t()).view(), eye.view()));
    }
    let elapsed = secs(start.elapsed()) / xs.len() as f64;
    Outcome::check(
        hh < 1e-8 && fcf < 1e-10 && elapsed < 1.0,
        format!("max|C_hh - I| = {hh:.2e} (< 1e-8), max|F C_xx F^T - I| = {fcf:.2e} (< 1e-10), {elapsed:.3} s per instance (< 1 s)"),
    )
}

/// Blockwise max |HᵀH − XᵀC⁺X| without forming the T×T matrices.
fn gram_gap(x: ArrayView2<f64>) -> f64 {
    let w = fit_whitening(x, 3, DEFAULT_RANK_TOL).unwrap();
    let h = apply_whitening(&w, x).unwrap();
    let pinv = pseudoinverse(sample_covariance(x).unwrap().cov.view(), DEFAULT_RANK_TOL).unwrap();
    let px = pinv.dot(&x);
    let mut worst = 0.0f64;
    let block = 1000;
    for start in (0..x.ncols()).step_by(block) {
        let end = (start + block).min(x.ncols());
        let lhs = h.slice(s![.., start..end]).t().dot(&h);
        let rhs = x.slice(s![.., start..end]).t().dot(&px);
        worst = worst.max(max_abs_diff(lhs.view(), rhs.view()));
    }
    worst
}

fn criterion_gram(xs: &[Array2<f64>]) -> Outcome {
    let gap = xs.iter().map(|x| gram_gap(x.view())).fold(0.0, f64::max);
    Outcome::check(
        gap < 1e-6,
        format!("max|H^T H - X^T C+ X| = {gap:.2e} (< 1e-6)"),
    )
}

/// Dense Gaussian elimination with partial pivoting.
fn solve(mut a: Array2<f64>, mut b: Array1<f64>) -> Option<Array1<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[[i, col]].abs().total_cmp(&a[[j, col]].abs()))?;
        if a[[piv, col]].abs() < 1e-14 {
            return None;
        }
        for k in 0..n {
            a.swap([col, k], [piv, k]);
        }
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[[row, col]] / a[[col, col]];
            for k in col..n {
                a[[row, k]] -= f * a[[col, k]];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = Array1::zeros(n);
    for row in (0..n).rev() {
        let tail: f64 = (row + 1..n).map(|k| a[[row, k]] * x[k]).sum();
        x[row] = (b[row] - tail) / a[[row, row]];
    }
    Some(x)
}

/// Enumerates every support set of `min ½yᵀMy − cᵀy, y ≥ 0` and returns the
/// one point that satisfies the KKT conditions.
fn active_set_oracle(m: &Array2<f64>, c: &Array1<f64>) -> Array1<f64> {
    let d = c.len();
    let mut best: Option<(f64, Array1<f64>)> = None;
    for mask in 0u32..(1 << d) {
        let support: Vec<usize> = (0..d).filter(|i| mask & (1 << i) != 0).collect();
        let mut y = Array1::zeros(d);
        if !support.is_empty() {
            let sub = Array2::from_shape_fn((support.len(), support.len()), |(i, j)| {
                m[[support[i], support[j]]]
            });
            let rhs = Array1::from_iter(support.iter().map(|&i| c[i]));
            let Some(sol) = solve(sub, rhs) else { continue };
            if sol.iter().any(|&v| v <= 0.0) {
                continue;
            }
            for (&i, &v) in support.iter().zip(sol.iter()) {
                y[i] = v;
            }
        }
        let grad = m.dot(&y) - c;
        let dual_ok = (0..d).all(|i| mask & (1 << i) != 0 || grad[i] >= -1e-12);
        if dual_ok {
            let value = 0.5 * y.dot(&m.dot(&y)) - c.dot(&y);
            if best.as_ref().is_none_or(|(v, _)| value < *v) {
                best = Some((value, y));
            }
        }
    }
    best.expect("strictly convex problem has a KKT point").1
}

fn criterion_dynamics() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let p = Hyperparams {
        gamma: StepSize::Adaptive,
        dyn_tol: 1e-13,
        dyn_max_iter: 1_000_000,
        ..Hyperparams::default()
    };
    let mut worst = 0.0f64;
    let mut unconverged = 0;
    for d in 2..=5 {
        for _ in 0..100 {
            let b = Array2::from_shape_simple_fn((d, d), || rng.sample::<f64, _>(StandardNormal));
            let m = b.dot(&b.t()) + Array2::<f64>::eye(d) * 0.1;
            let c = Array1::from_shape_simple_fn(d, || rng.sample::<f64, _>(StandardNormal));
            let out = fast_dynamics(c.view(), m.view(), &p, None).unwrap();
            unconverged += usize::from(!out.converged);
            let oracle = active_set_oracle(&m, &c);
            let gap = (&out.y - &oracle)
                .iter()
                .fold(0.0f64, |a, v| a.max(v.abs()));
            worst = worst.max(gap);
        }
    }
    let elapsed = secs(start.elapsed());
    Outcome::check(
        worst < 1e-6 && unconverged == 0 && elapsed < 5.0,
        format!("400 instances, max |y - y_oracle| = {worst:.2e} (< 1e-6), {unconverged} unconverged, {elapsed:.2} s (< 5 s)"),
    )
}

fn criterion_stationarity() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let (d, t) = (3, 200);
        let x = experiment::generate(d, d, t, 1000 + seed)
            .unwrap()
            .mixture
            .view()
            .to_owned();
        let y = Array2::from_shape_simple_fn((d, t), || rng.random_range(0.0..2.0f64).max(0.0));
        let pinv = pseudoinverse(
            sample_covariance(x.view()).unwrap().cov.view(),
            DEFAULT_RANK_TOL,
        )
        .unwrap();
        let w = y.dot(&x.t()).dot(&pinv) / t as f64;
        let m = y.dot(&y.t()) / t as f64;
        let h = 1e-3;
        let mut grad_max = 0.0f64;
        for i in 0..d {
            for j in 0..d {
                let (mut wp, mut wm) = (w.clone(), w.clone());
                wp[[i, j]] += h;
                wm[[i, j]] -= h;
                let gw = (lagrangian_value(wp.view(), m.view(), y.view(), x.view()).unwrap()
                    - lagrangian_value(wm.view(), m.view(), y.view(), x.view()).unwrap())
                    / (2.0 * h);
                let (mut mp, mut mm) = (m.clone(), m.clone());
                mp[[i, j]] += h;
                mm[[i, j]] -= h;
                let gm = (lagrangian_value(w.view(), mp.view(), y.view(), x.view()).unwrap()
                    - lagrangian_value(w.view(), mm.view(), y.view(), x.view()).unwrap())
                    / (2.0 * h);
                grad_max = grad_max.max(gw.abs()).max(gm.abs());
            }
        }
        worst = worst.max(grad_max);
    }
    Outcome::check(
        worst < 1e-5,
        format!("max |dL/dW|, |dL/dM| at (W*, M*) = {worst:.2e} over 10 instances (< 1e-5)"),
    )
}

fn criterion_positive_definite() -> Outcome {
    let data = experiment::generate(3, 3, 100_000, 7).unwrap();
    let eta0 = 0.01;
    let mut parts = Vec::new();
    let mut ok = true;
    for ratio in [0.1, 0.5, 0.9] {
        let p = Hyperparams {
            eta: LearningRate::Decay { eta0, decay: 1e-3 },
            tau: eta0 / ratio,
            ..Hyperparams::default()
        };
        let mut state = BioNicaState::init(3, 3, 7).unwrap();
        let result = data
            .mixture
            .view()
            .columns()
            .into_iter()
            .try_for_each(|x| state.step(x, &p).map(drop));
        match result {
            Ok(()) => {
                let lam = min_eigenvalue(state.m());
                ok &= lam > 0.0;
                parts.push(format!("eta/tau={ratio}: min eig {lam:.3e}"));
            }
            Err(e) => {
                ok = false;
                parts.push(format!("eta/tau={ratio}: {e}"));
            }
        }
    }
    Outcome::check(ok, format!("after 1e5 steps: {}", parts.join(", ")))
}

struct SparseRuns {
    bio: Vec<ErrorTrajectory>,
    nnpca: Vec<ErrorTrajectory>,
    slowest: f64,
}

fn sparse_runs(algos: &[Algorithm]) -> SparseRuns {
    let mut runs = SparseRuns {
        bio: Vec::new(),
        nnpca: Vec::new(),
        slowest: 0.0,
    };
    for seed in 0..10 {
        let data = experiment::generate(3, 3, 100_000, seed).unwrap();
        for &algo in algos {
            let start = Instant::now();
            let out = experiment::run(data.mixture.view(), &RunConfig::new(algo, 3, seed)).unwrap();
            let tr = experiment::evaluate(data.sources.view(), out.y.view(), 100).unwrap();
            if algo == Algorithm::BioNica {
                runs.slowest = runs.slowest.max(secs(start.elapsed()));
                runs.bio.push(tr);
            } else {
                runs.nnpca.push(tr);
            }
        }
    }
    runs
}

fn criterion_sparse(runs: &SparseRuns) -> Outcome {
    let finals: Vec<f64> = runs.bio.iter().map(|t| t.final_error().unwrap()).collect();
    let early: Vec<f64> = runs.bio.iter().map(|t| t.error_at(1000).unwrap()).collect();
    let (med, med_early) = (median(&finals), median(&early));
    Outcome::check(
        med < 0.05 && med < 0.1 * med_early && runs.slowest < 60.0,
        format!(
            "10 seeds: median Error(T) = {med:.4} (< 0.05), median Error(1e3) = {med_early:.4} (ratio {:.3} < 0.1), slowest run {:.2} s (< 60 s)",
            med / med_early,
            runs.slowest
        ),
    )
}

fn criterion_baseline(runs: &SparseRuns) -> Outcome {
    let bio = median(
        &runs
            .bio
            .iter()
            .map(|t| t.final_error().unwrap())
            .collect::<Vec<_>>(),
    );
    let nn = median(
        &runs
            .nnpca
            .iter()
            .map(|t| t.final_error().unwrap())
            .collect::<Vec<_>>(),
    );
    let detail = format!("median Error(T): Nonnegative PCA {nn:.4}, Bio-NICA {bio:.4}");
    let verdict = if nn <= bio {
        Verdict::Pass
    } else if nn < 2.0 * bio {
        Verdict::Warn
    } else {
        Verdict::Fail
    };
    Outcome { verdict, detail }
}

fn criterion_offline() -> Outcome {
    let seed = 1;
    let data = experiment::generate(2, 2, 2000, seed).unwrap();
    let cfg = RunConfig::new(Algorithm::Offline, 2, seed);
    let out = experiment::run(data.mixture.view(), &cfg).unwrap();
    let err = experiment::evaluate(data.sources.view(), out.y.view(), 2000)
        .unwrap()
        .final_error()
        .unwrap();
    let trace = out.objective_trace.unwrap();
    let (first, last) = (trace[0], trace[trace.len() - 1]);
    Outcome::check(
        err < 0.05 && last < first && trace.len() <= 500,
        format!(
            "seed {seed}, {} outer iterations: Error = {err:.4} (< 0.05), objective {first:.4e} -> {last:.4e}",
            trace.len()
        ),
    )
}

fn image_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/images")
}

fn image_run(seed: u64) -> (Vec<f64>, ErrorTrajectory, f64) {
    let imgs: Vec<_> = ["camera", "brick", "gravel"]
        .iter()
        .map(|n| load_pgm(image_dir().join(format!("{n}.pgm"))).unwrap())
        .collect();
    let start = Instant::now();
    let out = run_images(&imgs, &ImageConfig::new(seed)).unwrap();
    let elapsed = secs(start.elapsed());
    let tr = image_trajectory(&out, 100).unwrap();
    (out.correlations, tr, elapsed)
}

fn criterion_images(result: &(Vec<f64>, ErrorTrajectory, f64)) -> Outcome {
    let (corr, _, elapsed) = result;
    let min = corr.iter().copied().fold(f64::INFINITY, f64::min);
    let parts: Vec<String> = corr.iter().map(|c| format!("{c:.4}")).collect();
    Outcome::check(
        min > 0.9 && *elapsed < 300.0,
        format!(
            "3 images 252x252, k=6, 15 epochs: correlations [{}] (> 0.9), {elapsed:.1} s (< 300 s)",
            parts.join(", ")
        ),
    )
}

fn csv_bytes(tr: &ErrorTrajectory, dir: &Path, name: &str) -> Vec<u8> {
    let path = dir.join(name);
    tr.write_csv(&path).unwrap();
    std::fs::read(path).unwrap()
}

fn criterion_determinism(first_sparse: &SparseRuns, first_image: &ErrorTrajectory) -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let again = sparse_runs(&[Algorithm::BioNica]);
    let sparse_same = first_sparse
        .bio
        .iter()
        .zip(&again.bio)
        .enumerate()
        .all(|(i, (a, b))| {
            csv_bytes(a, dir.path(), &format!("a{i}.csv"))
                == csv_bytes(b, dir.path(), &format!("b{i}.csv"))
        });
    let (_, image_again, _) = image_run(0);
    let image_same = csv_bytes(first_image, dir.path(), "img_a.csv")
        == csv_bytes(&image_again, dir.path(), "img_b.csv");
    Outcome::check(
        sparse_same && image_same,
        format!("rerun trajectory CSVs byte-identical: sparse 10 seeds {sparse_same}, images {image_same}"),
    )
}

fn main() {
    let start = Instant::now();
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    let xs = whitening_instances();
    results.push((1, "whitening correctness", criterion_whitening(&xs)));
    results.push((2, "gram substitution", criterion_gram(&xs)));
    results.push((
        3,
        "fast dynamics vs active-set oracle",
        criterion_dynamics(),
    ));
    results.push((4, "saddle-point stationarity", criterion_stationarity()));
    results.push((
        5,
        "lateral weights stay positive definite",
        criterion_positive_definite(),
    ));
    let sparse = sparse_runs(&[Algorithm::BioNica, Algorithm::Nnpca]);
    results.push((6, "sparse-source separation", criterion_sparse(&sparse)));
    results.push((7, "baseline ordering (soft)", criterion_baseline(&sparse)));
    results.push((8, "offline algorithm", criterion_offline()));
    let images = image_run(0);
    results.push((9, "image separation", criterion_images(&images)));
    results.push((10, "determinism", criterion_determinism(&sparse, &images.1)));

    let mut failed = 0;
    for (n, name, outcome) in &results {
        let tag = match outcome.verdict {
            Verdict::Pass => "PASS",
            Verdict::Warn => "WARN",
            Verdict::Fail => {
                failed += 1;
                "FAIL"
            }
        };
        println!("[{tag}] criterion {n:>2} {name}: {}", outcome.detail);
    }
    println!(
        "acceptance: {} of {} criteria failed ({:.1} s)",
        failed,
        results.len(),
        secs(start.elapsed())
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
