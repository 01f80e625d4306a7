use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bionica(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bionica"))
        .current_dir(dir)
        .env_remove("BIONICA_SEED")
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn csv_shape(path: &Path) -> (usize, usize) {
    let text = fs::read_to_string(path).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    (rows.len(), rows[0].split(',').count())
}

#[test]
fn generate_writes_shapes_and_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bionica(
        tmp.path(),
        &[
            "generate", "--d", "3", "--k", "4", "--T", "500", "--seed", "1", "--out", "a",
        ],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("seed=1"));
    let a = tmp.path().join("a");
    assert_eq!(csv_shape(&a.join("S.csv")), (3, 500));
    assert_eq!(csv_shape(&a.join("A.csv")), (4, 3));
    assert_eq!(csv_shape(&a.join("X.csv")), (4, 500));

    let again = bionica(
        tmp.path(),
        &[
            "generate", "--d=3", "--k=4", "--T=500", "--seed=1", "--out=b",
        ],
    );
    assert!(again.status.success());
    for f in ["S.csv", "A.csv", "X.csv"] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(tmp.path().join("b").join(f)).unwrap()
        );
    }
}

#[test]
fn seed_falls_back_to_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let env_run = Command::new(env!("CARGO_BIN_EXE_bionica"))
        .current_dir(tmp.path())
        .env("BIONICA_SEED", "5")
        .args(["generate", "--T", "50", "--out", "env"])
        .output()
        .unwrap();
    assert!(env_run.status.success());
    assert!(bionica(
        tmp.path(),
        &["generate", "--T", "50", "--seed", "5", "--out", "flag"]
    )
    .status
    .success());
    assert_eq!(
        fs::read(tmp.path().join("env/X.csv")).unwrap(),
        fs::read(tmp.path().join("flag/X.csv")).unwrap()
    );
}

#[test]
fn config_errors_exit_with_code_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bionica(tmp.path(), &["generate", "--d", "3", "--k", "2"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("k >= d"), "{}", stderr(&out));

    let out = bionica(tmp.path(), &["run", "--bogus", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("bogus"));

    let out = bionica(tmp.path(), &["run", "--eta0", "0.5", "--tau", "0.1"]);
    assert_eq!(out.status.code(), Some(2));

    fs::write(tmp.path().join("bad.cfg"), "d 3\n").unwrap();
    let out = bionica(tmp.path(), &["generate", "--config", "bad.cfg"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn missing_inputs_exit_with_code_3() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bionica(tmp.path(), &["run", "--in", "nowhere"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("X.csv"));
}

#[test]
fn numerical_abort_exits_with_code_4() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("huge");
    fs::create_dir(&data).unwrap();
    fs::write(data.join("X.csv"), "1e300,2e300\n3e300,1e300\n").unwrap();
    let out = bionica(tmp.path(), &["run", "--in", "huge", "--d", "2"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(stderr(&out).contains("step 1"), "{}", stderr(&out));
}

#[test]
fn run_writes_artifacts_and_replays_from_metadata() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(bionica(
        tmp.path(),
        &["generate", "--T", "3000", "--seed", "2", "--out", "data"]
    )
    .status
    .success());
    let out = bionica(
        tmp.path(),
        &["run", "--in", "data", "--seed", "4", "--out", "r1"],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("final_error="));
    let r1 = tmp.path().join("r1");
    assert_eq!(csv_shape(&r1.join("Y.csv")), (3, 3000));
    let traj = fs::read_to_string(r1.join("error_trajectory.csv")).unwrap();
    assert!(traj.starts_with("t,error\n100,"));
    assert!(traj.trim_end().lines().last().unwrap().starts_with("3000,"));
    for f in ["W.csv", "M.csv", "means.csv", "meta.csv"] {
        assert!(r1.join("checkpoint").join(f).exists(), "{f}");
    }
    let meta = fs::read_to_string(r1.join("run_meta.txt")).unwrap();
    assert!(meta.contains("seed=4\n") && meta.contains("eta0=") && meta.contains("wall_time_s"));

    let replay = bionica(
        tmp.path(),
        &["run", "--config", "r1/run_meta.txt", "--out", "r2"],
    );
    assert!(replay.status.success(), "{}", stderr(&replay));
    for f in ["Y.csv", "error_trajectory.csv"] {
        assert_eq!(
            fs::read(r1.join(f)).unwrap(),
            fs::read(tmp.path().join("r2").join(f)).unwrap()
        );
    }
}

#[test]
fn offline_and_baseline_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bionica(
        tmp.path(),
        &[
            "run", "--algo", "offline", "--d", "2", "--T", "2000", "--seed", "1", "--out", "off",
        ],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let trace = fs::read_to_string(tmp.path().join("off/objective_trace.csv")).unwrap();
    assert!(trace.starts_with("iteration,objective\n"));
    assert_eq!(trace.lines().count(), 501);

    let out = bionica(
        tmp.path(),
        &["run", "--algo", "nnpca", "--T", "2000", "--out", "nn"],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let meta = fs::read_to_string(tmp.path().join("nn/run_meta.txt")).unwrap();
    assert!(meta.contains("whitening=offline"));
    assert!(tmp.path().join("nn/checkpoint/whitening.csv").exists());
}

#[test]
fn multi_run_writes_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bionica(
        tmp.path(),
        &[
            "run", "--runs", "3", "--T", "1000", "--seed", "10", "--out", "multi",
        ],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let base = tmp.path().join("multi");
    for seed in 10..13 {
        assert!(base
            .join(format!("seed_{seed}/error_trajectory.csv"))
            .exists());
    }
    let summary = fs::read_to_string(base.join("summary.csv")).unwrap();
    assert!(summary.starts_with("t,mean,std\n"));
    assert_eq!(summary.lines().count(), 11);
    let finals = fs::read_to_string(base.join("finals.csv")).unwrap();
    assert_eq!(finals.lines().count(), 4);
}

#[test]
fn eval_reports_permutation() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("e");
    fs::create_dir(&dir).unwrap();
    fs::write(dir.join("S.csv"), "1,0,2,0\n0,3,1,1\n").unwrap();
    fs::write(dir.join("Y.csv"), "1,0,2,0\n0,3,1,1\n").unwrap();
    let out = bionica(tmp.path(), &["eval", "--in", "e"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("final_error=0\n"));
    assert!(stdout(&out).contains("permutation=[0 1]"));
    assert!(dir.join("error_trajectory.csv").exists());

    fs::write(dir.join("Y.csv"), "0,3,1,1\n1,0,2,0\n").unwrap();
    let out = bionica(tmp.path(), &["eval", "--in", "e", "--out", "e2"]);
    assert!(stdout(&out).contains("final_error=0\n"));
    assert!(stdout(&out).contains("permutation=[1 0]"));

    fs::write(dir.join("Y.csv"), "0,3,1\n1,0,2\n").unwrap();
    let out = bionica(tmp.path(), &["eval", "--in", "e"]);
    assert!(!out.status.success());
}

fn write_test_pgm(path: &Path, n: usize) {
    let mut bytes = b"P5\n8 8\n255\n".to_vec();
    bytes.extend((0..64).map(|i| (((i * (n + 3) + n * 17) % 29) * 8) as u8));
    fs::write(path, bytes).unwrap();
}

#[test]
fn images_smoke() {
    let tmp = tempfile::tempdir().unwrap();
    let imgs = tmp.path().join("imgs");
    fs::create_dir(&imgs).unwrap();
    for n in 0..3 {
        write_test_pgm(&imgs.join(format!("im{n}.pgm")), n);
    }
    let out = bionica(
        tmp.path(),
        &[
            "images", "--images", "imgs", "--epochs", "1", "--stride", "16", "--out", "o",
        ],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let o = tmp.path().join("o");
    assert_eq!(csv_shape(&o.join("Y.csv")), (3, 64));
    assert_eq!(csv_shape(&o.join("Y_final.csv")), (3, 64));
    assert_eq!(csv_shape(&o.join("A.csv")), (6, 3));
    for n in 0..3 {
        let pgm = fs::read(o.join(format!("recovered_im{n}.pgm"))).unwrap();
        assert!(pgm.starts_with(b"P5\n8 8\n255\n"));
        assert_eq!(pgm.len(), 11 + 64);
    }
    let report = fs::read_to_string(o.join("correlations.csv")).unwrap();
    assert_eq!(report.lines().count(), 4);
    assert_eq!(
        fs::read_to_string(o.join("error_trajectory.csv"))
            .unwrap()
            .lines()
            .count(),
        5
    );

    let out = bionica(
        tmp.path(),
        &["images", "--images", "imgs/im0.pgm,imgs/missing.pgm"],
    );
    assert_eq!(out.status.code(), Some(3));
}
