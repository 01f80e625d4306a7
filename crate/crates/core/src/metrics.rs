//! Permutation-matched recovery error.
//!
//! Sources are only identifiable up to order, so outputs are compared after
//! the row permutation that minimizes the total squared error over the whole
//! run. That single permutation is then applied to every time point.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::{ArrayView1, ArrayView2};

use crate::{Error, Result};

/// Largest `d` for which [`PermutationSearch::Auto`] enumerates all permutations.
pub const EXHAUSTIVE_MAX_AUTO: usize = 6;
/// Largest `d` accepted by [`PermutationSearch::Exhaustive`].
pub const EXHAUSTIVE_MAX: usize = 12;

/// Row matching: `perm[i] = j` pairs source row `i` with output row `j`,
/// i.e. row `i` of `P·Y` is row `j` of `Y`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation(pub Vec<usize>);

impl Permutation {
    pub fn identity(d: usize) -> Self {
        Permutation((0..d).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_valid(&self) -> bool {
        let mut seen = vec![false; self.0.len()];
        self.0
            .iter()
            .all(|&j| j < seen.len() && !std::mem::replace(&mut seen[j], true))
    }
}

impl std::fmt::Display for Permutation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|j| j.to_string()).collect();
        write!(f, "[{}]", parts.join(" "))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PermutationSearch {
    /// Exhaustive for `d ≤ 6`, Hungarian assignment above.
    #[default]
    Auto,
    Exhaustive,
    Hungarian,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorTrajectory {
    pub times: Vec<u64>,
    pub errors: Vec<f64>,
    pub permutation: Permutation,
}

impl ErrorTrajectory {
    pub fn final_error(&self) -> Option<f64> {
        self.errors.last().copied()
    }

    /// `Error(t)` at the largest recorded time `≤ t`.
    pub fn error_at(&self, t: u64) -> Option<f64> {
        let idx = self.times.partition_point(|&x| x <= t);
        idx.checked_sub(1).map(|i| self.errors[i])
    }

    /// Writes `t,error` CSV.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let mut body = String::from("t,error\n");
        for (t, e) in self.times.iter().zip(&self.errors) {
            body.push_str(&t.to_string());
            body.push(',');
            crate::dataset::format_f64(&mut body, *e);
            body.push('\n');
        }
        w.write_all(body.as_bytes())
            .map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn check_shapes(s: ArrayView2<f64>, y: ArrayView2<f64>, what: &'static str) -> Result<()> {
    if s.dim() != y.dim() {
        return Err(Error::shape(
            what,
            format!("{:?}", s.dim()),
            format!("{:?}", y.dim()),
        ));
    }
    Ok(())
}

/// `cost[i][j] = Σ_t (s_it − y_jt)²`.
pub fn match_costs(s: ArrayView2<f64>, y: ArrayView2<f64>) -> Result<Vec<Vec<f64>>> {
    if s.ncols() != y.ncols() || s.nrows() != y.nrows() {
        return Err(Error::shape(
            "match_costs",
            format!("{:?}", s.dim()),
            format!("{:?}", y.dim()),
        ));
    }
    Ok(s.rows()
        .into_iter()
        .map(|sr| {
            y.rows()
                .into_iter()
                .map(|yr| {
                    sr.iter()
                        .zip(yr.iter())
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum()
                })
                .collect()
        })
        .collect())
}

/// The row permutation minimizing `Σ_t ‖s_t − P y_t‖²`, with its cost.
pub fn best_permutation(
    s: ArrayView2<f64>,
    y: ArrayView2<f64>,
    mode: PermutationSearch,
) -> Result<(Permutation, f64)> {
    check_shapes(s, y, "best_permutation")?;
    let d = s.nrows();
    let cost = match_costs(s, y)?;
    let exhaustive = match mode {
        PermutationSearch::Auto => d <= EXHAUSTIVE_MAX_AUTO,
        PermutationSearch::Exhaustive => {
            if d > EXHAUSTIVE_MAX {
                return Err(Error::InvalidConfig(format!(
                    "exhaustive permutation search supports d <= {EXHAUSTIVE_MAX}, got {d}"
                )));
            }
            true
        }
        PermutationSearch::Hungarian => false,
    };
    let perm = if exhaustive {
        exhaustive_assignment(&cost)
    } else {
        hungarian(&cost)
    };
    let total = perm.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
    Ok((Permutation(perm), total))
}

fn exhaustive_assignment(cost: &[Vec<f64>]) -> Vec<usize> {
    fn recurse(
        cost: &[Vec<f64>],
        row: usize,
        used: &mut [bool],
        current: &mut Vec<usize>,
        acc: f64,
        best: &mut (f64, Vec<usize>),
    ) {
        if row == cost.len() {
            if acc < best.0 {
                *best = (acc, current.clone());
            }
            return;
        }
        for j in 0..cost.len() {
            if !used[j] {
                used[j] = true;
                current.push(j);
                recurse(cost, row + 1, used, current, acc + cost[row][j], best);
                current.pop();
                used[j] = false;
            }
        }
    }
    let n = cost.len();
    let mut best = (f64::INFINITY, (0..n).collect());
    recurse(
        cost,
        0,
        &mut vec![false; n],
        &mut Vec::with_capacity(n),
        0.0,
        &mut best,
    );
    best.1
}

/// Minimum-cost perfect matching on a square cost matrix (shortest
/// augmenting paths with row/column potentials, O(n³)).
fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    // 1-based internals; column 0 is a virtual root
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut perm = vec![0; n];
    for j in 1..=n {
        perm[owner[j] - 1] = j - 1;
    }
    perm
}

fn sample_sq_error(s: ArrayView1<f64>, y: ArrayView1<f64>, perm: &Permutation) -> f64 {
    perm.0
        .iter()
        .enumerate()
        .map(|(i, &j)| (s[i] - y[j]).powi(2))
        .sum()
}

/// `Error(t) = (1/(t·d)) Σ_{t' ≤ t} ‖s_t' − P y_t'‖²` at every `stride`-th
/// sample and at the final sample.
pub fn error_trajectory(
    s: ArrayView2<f64>,
    y: ArrayView2<f64>,
    perm: &Permutation,
    stride: usize,
) -> Result<ErrorTrajectory> {
    check_shapes(s, y, "error_trajectory")?;
    let (d, total) = s.dim();
    if perm.len() != d || !perm.is_valid() {
        return Err(Error::InvalidConfig(format!(
            "{perm} is not a permutation of {d} rows"
        )));
    }
    if stride == 0 {
        return Err(Error::InvalidConfig(
            "trajectory stride must be >= 1".into(),
        ));
    }
    let mut times = Vec::with_capacity(total / stride + 1);
    let mut errors = Vec::with_capacity(total / stride + 1);
    let mut running = 0.0;
    for (idx, (sc, yc)) in s.columns().into_iter().zip(y.columns()).enumerate() {
        running += sample_sq_error(sc, yc, perm);
        let t = idx + 1;
        if t % stride == 0 || t == total {
            times.push(t as u64);
            errors.push(running / (t * d) as f64);
        }
    }
    Ok(ErrorTrajectory {
        times,
        errors,
        permutation: perm.clone(),
    })
}

/// `(1/(T·d)) Σ_t ‖s_t − P y_t‖²` over the whole run.
pub fn mean_squared_error(
    s: ArrayView2<f64>,
    y: ArrayView2<f64>,
    perm: &Permutation,
) -> Result<f64> {
    check_shapes(s, y, "mean_squared_error")?;
    let total: f64 = perm
        .0
        .iter()
        .enumerate()
        .map(|(i, &j)| {
            s.row(i)
                .iter()
                .zip(y.row(j).iter())
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
        })
        .sum();
    Ok(total / s.len() as f64)
}

/// Pearson correlation between each source row and its matched output row.
pub fn correlation_match(
    s: ArrayView2<f64>,
    y: ArrayView2<f64>,
    perm: &Permutation,
) -> Result<Vec<f64>> {
    check_shapes(s, y, "correlation_match")?;
    perm.0
        .iter()
        .enumerate()
        .map(|(i, &j)| {
            pearson(s.row(i), y.row(j)).ok_or_else(|| {
                Error::ZeroVariance(format!("source row {i} or output row {j} is constant"))
            })
        })
        .collect()
}

fn pearson(a: ArrayView1<f64>, b: ArrayView1<f64>) -> Option<f64> {
    let n = a.len() as f64;
    let (ma, mb) = (a.sum() / n, b.sum() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b.iter()) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    (saa > 0.0 && sbb > 0.0).then(|| sab / (saa * sbb).sqrt())
}
