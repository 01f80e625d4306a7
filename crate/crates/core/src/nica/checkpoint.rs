//! Resumable network checkpoints.
//!
//! A checkpoint is a directory holding:
//!
//! * `W.csv`, `M.csv`: weight matrices
//! * `means.csv`: one column, `x̄` (k entries) then `c̄` (d entries) then the
//!   last output `y` (d entries)
//! * `meta.csv`: `key,value` lines with the sample counter `t` and every
//!   hyperparameter

use std::fs;
use std::path::Path;

use ndarray::{concatenate, s, Array2, Axis};

use super::online::BioNicaState;
use super::params::Hyperparams;
use crate::dataset::{read_matrix_csv, write_matrix_csv};
use crate::{Error, Result};

pub fn save_checkpoint(dir: impl AsRef<Path>, state: &BioNicaState, p: &Hyperparams) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_matrix_csv(state.w.view(), dir.join("W.csv"))?;
    write_matrix_csv(state.m.view(), dir.join("M.csv"))?;
    let means = concatenate(
        Axis(0),
        &[state.x_bar.view(), state.c_bar.view(), state.last_y.view()],
    )
    .expect("1-d concatenation");
    write_matrix_csv(means.insert_axis(Axis(1)).view(), dir.join("means.csv"))?;

    let mut meta = format!("t,{}\n", state.t);
    for (k, v) in p.to_pairs() {
        meta.push_str(&format!("{k},{v}\n"));
    }
    let path = dir.join("meta.csv");
    fs::write(&path, meta).map_err(|e| Error::io(&path, e))
}

pub fn load_checkpoint(dir: impl AsRef<Path>) -> Result<(BioNicaState, Hyperparams)> {
    let dir = dir.as_ref();
    let w = read_matrix_csv(dir.join("W.csv"))?;
    let m = read_matrix_csv(dir.join("M.csv"))?;
    let means: Array2<f64> = read_matrix_csv(dir.join("means.csv"))?;
    let (d, k) = w.dim();
    if means.dim() != (k + 2 * d, 1) {
        return Err(Error::shape(
            "checkpoint means.csv",
            format!("({}, 1)", k + 2 * d),
            format!("{:?}", means.dim()),
        ));
    }
    let col = means.column(0);

    let path = dir.join("meta.csv");
    let meta = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut t = None;
    let mut p = Hyperparams::default();
    for (n, line) in meta
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
    {
        let bad = |message: String| Error::Parse {
            kind: "checkpoint metadata",
            path: Some(path.clone()),
            line: Some(n + 1),
            message,
        };
        let (key, value) = line
            .split_once(',')
            .ok_or_else(|| bad(format!("expected key,value, got {line:?}")))?;
        if key == "t" {
            t = Some(
                value
                    .parse()
                    .map_err(|_| bad(format!("bad sample counter {value:?}")))?,
            );
        } else if !p.set(key, value)? {
            return Err(bad(format!("unknown key {key:?}")));
        }
    }
    let t = t.ok_or_else(|| Error::Parse {
        kind: "checkpoint metadata",
        path: Some(path.clone()),
        line: None,
        message: "missing sample counter t".into(),
    })?;
    p.validate()?;

    let state = BioNicaState::from_parts(
        w,
        m,
        col.slice(s![..k]).to_owned(),
        col.slice(s![k..k + d]).to_owned(),
        t,
        col.slice(s![k + d..]).to_owned(),
    )?;
    Ok((state, p))
}
