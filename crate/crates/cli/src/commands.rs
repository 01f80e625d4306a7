use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::{Array2, ArrayView2};

use bionica::dataset::{
    load_pgm, read_matrix_csv, rescale_to_u8, write_matrix_csv, write_pgm, ImagePatch,
};
use bionica::experiment::{
    self, image_trajectory, run_images, summarize, write_summary_csv, Algorithm, ImageConfig,
    RunConfig, RunOutput,
};
use bionica::metrics::{
    best_permutation, correlation_match, error_trajectory, ErrorTrajectory, PermutationSearch,
};
use bionica::nica::{save_checkpoint, Hyperparams, LearningRate};
use bionica::{Error, Result};

use crate::config::{Config, HYPER_KEYS};

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, body: &str) -> Result<()> {
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

fn apply_hyper(cfg: &Config, p: &mut Hyperparams) -> Result<()> {
    for key in HYPER_KEYS {
        if let Some(v) = cfg.raw(key) {
            p.set(key, v)?;
        }
    }
    p.validate()
}

fn schedule(eta0: f64, decay: f64) -> LearningRate {
    if decay == 0.0 {
        LearningRate::Constant(eta0)
    } else {
        LearningRate::Decay { eta0, decay }
    }
}

/// One directory per seed when several runs are requested.
fn run_dir(base: &Path, runs: u64, seed: u64) -> PathBuf {
    if runs > 1 {
        base.join(format!("seed_{seed}"))
    } else {
        base.to_owned()
    }
}

fn runs(cfg: &Config) -> Result<u64> {
    let runs: u64 = cfg.get_or("runs", 1)?;
    if runs == 0 {
        return Err(Error::InvalidConfig("runs must be >= 1".into()));
    }
    Ok(runs)
}

fn stride(cfg: &Config) -> Result<usize> {
    let stride: usize = cfg.get_or("stride", 100)?;
    if stride == 0 {
        return Err(Error::InvalidConfig("stride must be >= 1".into()));
    }
    Ok(stride)
}

/// Metadata as a config file: plain lines are replayable keys, `#` lines are
/// informational.
struct Meta(String);

impl Meta {
    fn new(command: &str) -> Self {
        Meta(format!("# command={command}\n"))
    }

    fn key(&mut self, key: &str, value: impl std::fmt::Display) {
        let _ = writeln!(self.0, "{key}={value}");
    }

    fn note(&mut self, key: &str, value: impl std::fmt::Display) {
        let _ = writeln!(self.0, "# {key}={value}");
    }

    fn hyper(&mut self, p: &Hyperparams) {
        for (k, v) in p.to_pairs() {
            self.key(k, v);
        }
    }

    fn write(&self, dir: &Path) -> Result<()> {
        write_text(&dir.join("run_meta.txt"), &self.0)
    }
}

pub fn generate(cfg: &Config) -> Result<()> {
    let d: usize = cfg.get_or("d", 3)?;
    let k: usize = cfg.get_or("k", d)?;
    let samples: usize = cfg.get_or("T", 100_000)?;
    let base = cfg.seed()?;
    let runs = runs(cfg)?;
    if d == 0 || samples == 0 {
        return Err(Error::InvalidConfig(format!(
            "need d >= 1 and T >= 1, got d={d}, T={samples}"
        )));
    }
    if k < d {
        return Err(Error::InvalidConfig(format!(
            "need k >= d (mixing must have full column rank), got k={k}, d={d}"
        )));
    }
    let out = cfg.out_dir();
    for seed in base..base + runs {
        let data = experiment::generate(d, k, samples, seed)?;
        let dir = run_dir(&out, runs, seed);
        create_dir(&dir)?;
        write_matrix_csv(data.sources.view(), dir.join("S.csv"))?;
        write_matrix_csv(data.mixing.view(), dir.join("A.csv"))?;
        write_matrix_csv(data.mixture.view(), dir.join("X.csv"))?;
        println!(
            "generated S {d}x{samples}, A {k}x{d}, X {k}x{samples} seed={seed} -> {}",
            dir.display()
        );
    }
    Ok(())
}

struct RunInputs {
    x: Array2<f64>,
    s: Option<Array2<f64>>,
    source: String,
}

fn load_inputs(dir: &Path) -> Result<RunInputs> {
    let x = read_matrix_csv(dir.join("X.csv"))?;
    let s_path = dir.join("S.csv");
    let s = if s_path.exists() {
        let s = read_matrix_csv(&s_path)?;
        if s.ncols() != x.ncols() {
            return Err(Error::shape("S.csv columns", x.ncols(), s.ncols()));
        }
        Some(s)
    } else {
        None
    };
    Ok(RunInputs {
        x,
        s,
        source: dir.display().to_string(),
    })
}

pub fn run(cfg: &Config) -> Result<()> {
    let algo: Algorithm = cfg.raw("algo").unwrap_or("bio-nica").parse()?;
    let base = cfg.seed()?;
    let runs = runs(cfg)?;
    let stride = stride(cfg)?;
    let shared = cfg.in_dir().map(|dir| load_inputs(&dir)).transpose()?;

    let default_d = shared
        .as_ref()
        .map(|i| i.s.as_ref().map_or(i.x.nrows(), |s| s.nrows()))
        .unwrap_or(3);
    let d: usize = cfg.get_or("d", default_d)?;
    let k: usize = match &shared {
        Some(i) => i.x.nrows(),
        None => cfg.get_or("k", d)?,
    };
    let samples: usize = cfg.get_or("T", 100_000)?;
    if d == 0 || k < d {
        return Err(Error::InvalidConfig(format!(
            "need k >= d >= 1, got k={k}, d={d}"
        )));
    }
    if let Some(s) = shared.as_ref().and_then(|i| i.s.as_ref()) {
        if s.nrows() != d {
            return Err(Error::shape("S.csv rows vs d", d, s.nrows()));
        }
    }

    // Validate everything before the first run starts.
    let mut template = RunConfig::new(algo, d, base);
    apply_hyper(cfg, &mut template.hyper)?;
    let (n_eta0, n_decay) = match template.nnpca_eta {
        LearningRate::Constant(e) => (e, 0.0),
        LearningRate::Decay { eta0, decay } => (eta0, decay),
    };
    template.nnpca_eta = schedule(
        cfg.get_or("nnpca_eta0", n_eta0)?,
        cfg.get_or("nnpca_eta_decay", n_decay)?,
    );
    if !(template.nnpca_eta.peak() >= 0.0) {
        return Err(Error::InvalidConfig("nnpca_eta0 must be >= 0".into()));
    }
    template.offline.outer_iters = cfg.get_or("outer_iters", template.offline.outer_iters)?;
    template.offline.y_inner_tol = cfg.get_or("y_inner_tol", template.offline.y_inner_tol)?;
    template.offline.y_inner_max_iter =
        cfg.get_or("y_inner_max_iter", template.offline.y_inner_max_iter)?;
    if template.offline.outer_iters == 0
        || !(template.offline.y_inner_tol > 0.0)
        || template.offline.y_inner_max_iter == 0
    {
        return Err(Error::InvalidConfig(
            "outer_iters, y_inner_max_iter must be >= 1 and y_inner_tol > 0".into(),
        ));
    }

    let out = cfg.out_dir();
    let mut trajectories = Vec::new();
    let mut finals = String::from("seed,final_error\n");
    for seed in base..base + runs {
        let started = Instant::now();
        let generated;
        let (x, s, source) = match &shared {
            Some(i) => (i.x.view(), i.s.as_ref().map(|s| s.view()), i.source.clone()),
            None => {
                generated = experiment::generate(d, k, samples, seed)?;
                (
                    generated.mixture.view(),
                    Some(generated.sources.view()),
                    format!("generated d={d} k={k} T={samples} seed={seed}"),
                )
            }
        };
        let rc = RunConfig {
            seed,
            ..template.clone()
        };
        let output = experiment::run(x, &rc)?;
        let elapsed = started.elapsed().as_secs_f64();

        let dir = run_dir(&out, runs, seed);
        create_dir(&dir)?;
        let trajectory = write_run(&dir, &rc, &output, s, stride)?;

        let mut meta = Meta::new("run");
        meta.key("algo", algo);
        meta.key("seed", seed);
        meta.key("d", d);
        meta.key("k", k);
        meta.key("T", x.ncols());
        meta.key("stride", stride);
        if let Some(dir) = cfg.in_dir() {
            meta.key("in", dir.display());
        }
        meta.note("data", &source);
        match algo {
            Algorithm::BioNica => {
                meta.hyper(&rc.hyper);
                meta.note("init", "W ~ N(0, 1/k), M = I, running means 0");
            }
            Algorithm::Nnpca => {
                let (e, dc) = match rc.nnpca_eta {
                    LearningRate::Constant(e) => (e, 0.0),
                    LearningRate::Decay { eta0, decay } => (eta0, decay),
                };
                meta.key("nnpca_eta0", e);
                meta.key("nnpca_eta_decay", dc);
                meta.note(
                    "whitening",
                    "offline noncentered, fit on all of X before streaming",
                );
                meta.note(
                    "init",
                    "random orthogonal V, rows oriented toward the whitened mean",
                );
            }
            Algorithm::Offline => {
                meta.hyper(&rc.hyper);
                meta.key("outer_iters", rc.offline.outer_iters);
                meta.key("y_inner_tol", rc.offline.y_inner_tol);
                meta.key("y_inner_max_iter", rc.offline.y_inner_max_iter);
                meta.note(
                    "init",
                    "W ~ N(0, 1/k) rows oriented toward the input mean, M = I",
                );
            }
        }
        meta.note("unconverged_dynamics", output.unconverged);
        meta.note("wall_time_s", format!("{elapsed:.3}"));
        if let Some(tr) = &trajectory {
            meta.note("final_error", tr.final_error().unwrap_or(f64::NAN));
            meta.note("permutation", &tr.permutation);
        }
        meta.write(&dir)?;

        match &trajectory {
            Some(tr) => {
                let fe = tr.final_error().unwrap_or(f64::NAN);
                let _ = writeln!(finals, "{seed},{fe}");
                println!(
                    "{algo} seed={seed} final_error={fe:.6} permutation={} unconverged={} time={elapsed:.2}s -> {}",
                    tr.permutation,
                    output.unconverged,
                    dir.display()
                );
            }
            None => println!(
                "{algo} seed={seed} (no S.csv, not evaluated) unconverged={} time={elapsed:.2}s -> {}",
                output.unconverged,
                dir.display()
            ),
        }
        if let Some(tr) = trajectory {
            trajectories.push(tr);
        }
    }

    if runs > 1 && !trajectories.is_empty() {
        let rows = summarize(&trajectories)?;
        write_summary_csv(&rows, out.join("summary.csv"))?;
        write_text(&out.join("finals.csv"), &finals)?;
        if let Some(last) = rows.last() {
            println!(
                "summary over {} runs: Error(T) mean={:.6} std={:.6} -> {}",
                trajectories.len(),
                last.mean,
                last.std,
                out.join("summary.csv").display()
            );
        }
    }
    Ok(())
}

fn write_run(
    dir: &Path,
    rc: &RunConfig,
    output: &RunOutput,
    s: Option<ArrayView2<f64>>,
    stride: usize,
) -> Result<Option<ErrorTrajectory>> {
    write_matrix_csv(output.y.view(), dir.join("Y.csv"))?;
    let ckpt = dir.join("checkpoint");
    match (&output.state, &output.whitening) {
        (Some(state), _) => save_checkpoint(&ckpt, state, &rc.hyper)?,
        (None, Some(w)) => {
            create_dir(&ckpt)?;
            write_matrix_csv(w.matrix.view(), ckpt.join("whitening.csv"))?;
        }
        (None, None) => create_dir(&ckpt)?,
    }
    if let Some(trace) = &output.objective_trace {
        let mut body = String::from("iteration,objective\n");
        for (i, v) in trace.iter().enumerate() {
            let _ = writeln!(body, "{},{v:e}", i + 1);
        }
        write_text(&dir.join("objective_trace.csv"), &body)?;
    }
    let Some(s) = s else {
        return Ok(None);
    };
    let trajectory = experiment::evaluate(s, output.y.view(), stride)?;
    trajectory.write_csv(dir.join("error_trajectory.csv"))?;
    Ok(Some(trajectory))
}

fn image_paths(spec: &str) -> Result<Vec<PathBuf>> {
    let path = Path::new(spec);
    if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)
            .map_err(|e| Error::io(path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("pgm")))
            .collect();
        files.sort();
        if files.is_empty() {
            return Err(Error::InvalidConfig(format!(
                "no .pgm files in {}",
                path.display()
            )));
        }
        return Ok(files);
    }
    Ok(spec
        .split(',')
        .map(|p| PathBuf::from(p.trim()))
        .filter(|p| !p.as_os_str().is_empty())
        .collect())
}

pub fn images(cfg: &Config) -> Result<()> {
    let seed = cfg.seed()?;
    let mut ic = ImageConfig::new(seed);
    ic.k = cfg.get_or("k", ic.k)?;
    ic.epochs = cfg.get_or("epochs", ic.epochs)?;
    if ic.epochs == 0 {
        return Err(Error::InvalidConfig("epochs must be >= 1".into()));
    }
    apply_hyper(cfg, &mut ic.hyper)?;
    let stride = stride(cfg)?;
    let write_stream = cfg.bool_or("write_stream", true)?;
    let paths = image_paths(cfg.raw("images").unwrap_or("data/images"))?;
    if ic.k < paths.len() {
        return Err(Error::InvalidConfig(format!(
            "need k >= number of images, got k={}, images={}",
            ic.k,
            paths.len()
        )));
    }
    let imgs: Vec<ImagePatch> = paths.iter().map(load_pgm).collect::<Result<_>>()?;

    let started = Instant::now();
    let outcome = run_images(&imgs, &ic)?;
    let elapsed = started.elapsed().as_secs_f64();

    let out = cfg.out_dir();
    create_dir(&out)?;
    let (h, w) = imgs[0].pixels.dim();
    write_matrix_csv(outcome.mixing.view(), out.join("A.csv"))?;
    if write_stream {
        write_matrix_csv(outcome.y_stream.view(), out.join("Y.csv"))?;
    }
    write_matrix_csv(outcome.y_final.view(), out.join("Y_final.csv"))?;
    save_checkpoint(out.join("checkpoint"), &outcome.state, &ic.hyper)?;
    let trajectory = image_trajectory(&outcome, stride)?;
    trajectory.write_csv(out.join("error_trajectory.csv"))?;

    let mut report = String::from("image,output,correlation\n");
    for (i, img) in imgs.iter().enumerate() {
        let j = outcome.permutation.0[i];
        let row = outcome.y_final.row(j);
        let pixels = row
            .to_owned()
            .into_shape_with_order((h, w))
            .map_err(|e| Error::InvalidConfig(format!("reshape output {j}: {e}")))?;
        let file = out.join(format!("recovered_{}.pgm", img.source_id));
        write_pgm(rescale_to_u8(pixels.view()).view(), &file)?;
        let r = outcome.correlations[i];
        let _ = writeln!(report, "{},{j},{r}", img.source_id);
        println!(
            "{} <- output {j}: correlation {r:.4} -> {}",
            img.source_id,
            file.display()
        );
    }
    write_text(&out.join("correlations.csv"), &report)?;

    let mut meta = Meta::new("images");
    meta.key("seed", seed);
    meta.key("k", ic.k);
    meta.key("epochs", ic.epochs);
    meta.key("stride", stride);
    meta.key(
        "images",
        paths
            .iter()
            .map(|p| p.display().to_string())
            .collect::<Vec<_>>()
            .join(","),
    );
    meta.hyper(&ic.hyper);
    meta.note("samples_per_epoch", h * w);
    meta.note("permutation", &outcome.permutation);
    meta.note("wall_time_s", format!("{elapsed:.3}"));
    meta.write(&out)?;
    println!(
        "images: {} sources, {}x{} pixels, k={}, {} epochs, Error={:.6}, time={elapsed:.2}s -> {}",
        imgs.len(),
        h,
        w,
        ic.k,
        ic.epochs,
        trajectory.final_error().unwrap_or(f64::NAN),
        out.display()
    );
    Ok(())
}

pub fn eval(cfg: &Config) -> Result<()> {
    let dir = cfg.in_dir().ok_or_else(|| {
        Error::InvalidConfig("eval needs `in` (directory with S.csv and Y.csv)".into())
    })?;
    let stride = stride(cfg)?;
    let s = read_matrix_csv(dir.join("S.csv"))?;
    let y = read_matrix_csv(dir.join("Y.csv"))?;
    if s.dim() != y.dim() {
        return Err(Error::shape(
            "S.csv vs Y.csv",
            format!("{:?}", s.dim()),
            format!("{:?}", y.dim()),
        ));
    }
    let (perm, _) = best_permutation(s.view(), y.view(), PermutationSearch::Auto)?;
    let trajectory = error_trajectory(s.view(), y.view(), &perm, stride)?;
    let corr = correlation_match(s.view(), y.view(), &perm)?;
    println!(
        "final_error={}",
        trajectory.final_error().unwrap_or(f64::NAN)
    );
    println!("permutation={perm}");
    let parts: Vec<String> = corr.iter().map(|c| format!("{c:.6}")).collect();
    println!("correlations={}", parts.join(","));

    let out = if cfg.has("out") { cfg.out_dir() } else { dir };
    let path = out.join("error_trajectory.csv");
    if !path.exists() {
        create_dir(&out)?;
        trajectory.write_csv(&path)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
