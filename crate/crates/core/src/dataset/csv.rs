//! Plain numeric CSV: one matrix row per line, comma separated, no header.
//!
//! Values are written in the shortest decimal form that parses back to the
//! same `f64`, so a write/read cycle is bit-exact.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2};

use crate::{Error, Result};

/// Formats a float so that `str::parse::<f64>` recovers it exactly.
pub(crate) fn format_f64(out: &mut String, v: f64) {
    let a = v.abs();
    if v != 0.0 && !(1e-5..1e16).contains(&a) {
        let _ = write!(out, "{v:e}");
    } else {
        let _ = write!(out, "{v}");
    }
}

pub fn write_matrix_csv(matrix: ArrayView2<f64>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("matrix written to CSV"));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut line = String::new();
    for row in matrix.rows() {
        line.clear();
        for (j, &v) in row.iter().enumerate() {
            if j > 0 {
                line.push(',');
            }
            format_f64(&mut line, v);
        }
        line.push('\n');
        w.write_all(line.as_bytes())
            .map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_matrix_csv(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: usize, message: String| Error::Parse {
        kind: "CSV",
        path: Some(path.to_path_buf()),
        line: Some(line),
        message,
    };

    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let before = data.len();
        for cell in line.split(',') {
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|_| parse_err(idx + 1, format!("non-numeric cell {cell:?}")))?;
            data.push(v);
        }
        let width = data.len() - before;
        match cols {
            None => cols = Some(width),
            Some(c) if c != width => {
                return Err(parse_err(
                    idx + 1,
                    format!("ragged row: expected {c} cells, found {width}"),
                ))
            }
            _ => {}
        }
        rows += 1;
    }
    let cols = cols.unwrap_or(0);
    Ok(Array2::from_shape_vec((rows, cols), data).expect("row widths checked"))
}
