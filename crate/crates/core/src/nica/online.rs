//! The online single-layer network.
//!
//! Per sample `x_t`:
//!
//! 1. `c_t = W x_t`
//! 2. `y_t` from the rectified dynamics with lateral weights `M`
//! 3. running means `x̄_t`, `c̄_t` (with `t` already incremented)
//! 4. `W += 2η_t (y_t x_tᵀ − (c_t − c̄_t)(x_t − x̄_t)ᵀ)`
//! 5. `M += (η_t/τ)(y_t y_tᵀ − M)`
//!
//! Both updates only use quantities available at the two ends of each
//! synapse. The `(c − c̄)(x − x̄)ᵀ` term is a rank-1 stand-in for `W C_xx`,
//! which is what lets the network whiten implicitly.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;

use super::dynamics::{fast_dynamics, StepOutput};
use super::params::{Hyperparams, WarmStart};
use crate::linalg;
use crate::rng::{substream, Stream};
use crate::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-10;

/// Mutable network state. Single writer: steps must be applied in order.
#[derive(Debug, Clone, PartialEq)]
pub struct BioNicaState {
    pub(crate) w: Array2<f64>,
    pub(crate) m: Array2<f64>,
    pub(crate) x_bar: Array1<f64>,
    pub(crate) c_bar: Array1<f64>,
    pub(crate) t: u64,
    pub(crate) last_y: Array1<f64>,
}

impl BioNicaState {
    /// Starts from explicit weights. `M` must be symmetric positive definite.
    pub fn new(w: Array2<f64>, m: Array2<f64>) -> Result<Self> {
        let (d, k) = w.dim();
        if d == 0 || k == 0 {
            return Err(Error::InvalidConfig(format!(
                "W must be nonempty, got {d}×{k}"
            )));
        }
        if m.dim() != (d, d) {
            return Err(Error::shape(
                "lateral weights",
                format!("({d}, {d})"),
                format!("{:?}", m.dim()),
            ));
        }
        if w.iter().chain(m.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("initial weights"));
        }
        let asym = linalg::max_asymmetry(m.view());
        if asym > SYMMETRY_TOL {
            return Err(Error::NotSymmetric(asym));
        }
        if !(linalg::min_eigenvalue(m.view()) > 0.0) {
            return Err(Error::InvalidConfig("M must be positive definite".into()));
        }
        Ok(Self {
            w,
            m,
            x_bar: Array1::zeros(k),
            c_bar: Array1::zeros(d),
            t: 0,
            last_y: Array1::zeros(d),
        })
    }

    /// Default initialization: `W` i.i.d. `N(0, 1/k)`, `M = I_d`.
    pub fn init(d: usize, k: usize, seed: u64) -> Result<Self> {
        if d == 0 || k < d {
            return Err(Error::InvalidConfig(format!(
                "network needs k >= d >= 1, got k={k}, d={d}"
            )));
        }
        let mut rng = substream(seed, Stream::FeedforwardInit);
        let scale = 1.0 / (k as f64).sqrt();
        let w =
            Array2::from_shape_simple_fn((d, k), || scale * rng.sample::<f64, _>(StandardNormal));
        Self::new(w, Array2::eye(d))
    }

    pub(crate) fn from_parts(
        w: Array2<f64>,
        m: Array2<f64>,
        x_bar: Array1<f64>,
        c_bar: Array1<f64>,
        t: u64,
        last_y: Array1<f64>,
    ) -> Result<Self> {
        let mut s = Self::new(w, m)?;
        let (d, k) = s.w.dim();
        if x_bar.len() != k || c_bar.len() != d || last_y.len() != d {
            return Err(Error::shape(
                "state means",
                format!("k={k}, d={d}"),
                format!(
                    "x_bar={}, c_bar={}, last_y={}",
                    x_bar.len(),
                    c_bar.len(),
                    last_y.len()
                ),
            ));
        }
        s.x_bar = x_bar;
        s.c_bar = c_bar;
        s.t = t;
        s.last_y = last_y;
        Ok(s)
    }

    pub fn outputs(&self) -> usize {
        self.w.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.w.ncols()
    }

    /// Feedforward weights, `d×k`.
    pub fn w(&self) -> ArrayView2<'_, f64> {
        self.w.view()
    }

    /// Lateral weights, `d×d`.
    pub fn m(&self) -> ArrayView2<'_, f64> {
        self.m.view()
    }

    pub fn x_bar(&self) -> ArrayView1<'_, f64> {
        self.x_bar.view()
    }

    pub fn c_bar(&self) -> ArrayView1<'_, f64> {
        self.c_bar.view()
    }

    /// Samples processed so far.
    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn last_y(&self) -> ArrayView1<'_, f64> {
        self.last_y.view()
    }

    /// Outputs for a batch of inputs under the current weights, without learning.
    pub fn transform(&self, x: ArrayView2<f64>, p: &Hyperparams) -> Result<Array2<f64>> {
        if x.nrows() != self.inputs() {
            return Err(Error::shape("transform", self.inputs(), x.nrows()));
        }
        let c = self.w.dot(&x);
        let mut y = Array2::zeros((self.outputs(), x.ncols()));
        for (mut dst, col) in y.columns_mut().into_iter().zip(c.columns()) {
            dst.assign(&fast_dynamics(col, self.m.view(), p, None)?.y);
        }
        Ok(y)
    }

    /// One online update. See the module docs for the exact order.
    pub fn step(&mut self, x: ArrayView1<f64>, p: &Hyperparams) -> Result<StepOutput> {
        let step = self.t + 1;
        let numerical = |message: String| Error::Numerical { step, message };
        if x.len() != self.inputs() {
            return Err(Error::shape("online_step input", self.inputs(), x.len()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(numerical("non-finite input sample".into()));
        }

        let c = self.w.dot(&x);
        let y0 = match p.warm_start {
            WarmStart::Cold => None,
            WarmStart::Previous => Some(self.last_y.view()),
        };
        let out = fast_dynamics(c.view(), self.m.view(), p, y0)
            .map_err(|e| numerical(format!("output dynamics failed: {e}")))?;
        if out.y.iter().any(|v| !v.is_finite()) {
            return Err(numerical("output dynamics diverged".into()));
        }

        self.t = step;
        let inv_t = 1.0 / step as f64;
        self.x_bar
            .zip_mut_with(&x, |bar, &xi| *bar += inv_t * (xi - *bar));
        self.c_bar
            .zip_mut_with(&c, |bar, &ci| *bar += inv_t * (ci - *bar));

        let eta = p.eta_at(step);
        if eta != 0.0 {
            let (d, k) = self.w.dim();
            let dc = &c - &self.c_bar;
            let dx = &x - &self.x_bar;
            for i in 0..d {
                let (yi, dci) = (out.y[i], dc[i]);
                for j in 0..k {
                    self.w[[i, j]] += 2.0 * eta * (yi * x[j] - dci * dx[j]);
                }
            }
            let rate = eta / p.tau;
            for i in 0..d {
                for j in 0..d {
                    self.m[[i, j]] += rate * (out.y[i] * out.y[j] - self.m[[i, j]]);
                }
            }
            for i in 0..d {
                for j in (i + 1)..d {
                    let s = 0.5 * (self.m[[i, j]] + self.m[[j, i]]);
                    self.m[[i, j]] = s;
                    self.m[[j, i]] = s;
                }
            }
            if self.w.iter().chain(self.m.iter()).any(|v| !v.is_finite()) {
                return Err(numerical("weights became non-finite".into()));
            }
        }
        self.last_y.assign(&out.y);
        Ok(out)
    }
}

pub fn online_step(
    state: &mut BioNicaState,
    x: ArrayView1<f64>,
    p: &Hyperparams,
) -> Result<StepOutput> {
    state.step(x, p)
}

/// Streams samples through [`BioNicaState::step`], handing `(t, output)` to
/// `sink` after each one. Returns the number of samples processed.
pub fn run_online<'a, I, F>(
    state: &mut BioNicaState,
    stream: I,
    p: &Hyperparams,
    mut sink: F,
) -> Result<u64>
where
    I: IntoIterator<Item = ArrayView1<'a, f64>>,
    F: FnMut(u64, &StepOutput),
{
    p.validate()?;
    let mut n = 0;
    for x in stream {
        let out = state.step(x, p)?;
        n += 1;
        sink(state.t, &out);
    }
    if n == 0 {
        return Err(Error::InvalidConfig("input stream is empty".into()));
    }
    Ok(n)
}
