use std::fmt;
use std::str::FromStr;

use crate::{Error, Result};

/// Hard ceiling on the effective learning rate, as a fraction of `tau`.
pub const ETA_CAP_FRACTION: f64 = 0.95;

/// Learning-rate schedule `η_t`, evaluated at the 1-based sample index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LearningRate {
    Constant(f64),
    /// `η_t = eta0 / (1 + decay · t)`.
    Decay {
        eta0: f64,
        decay: f64,
    },
}

impl LearningRate {
    pub fn at(&self, t: u64) -> f64 {
        match *self {
            LearningRate::Constant(eta) => eta,
            LearningRate::Decay { eta0, decay } => eta0 / (1.0 + decay * t as f64),
        }
    }

    /// Largest value the schedule takes for `t ≥ 1` (schedules are nonincreasing).
    pub fn peak(&self) -> f64 {
        self.at(1)
    }
}

/// Step size of the rectified fixed-point iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSize {
    Fixed(f64),
    /// `1.8 / g(M)` where `g` is the Gershgorin bound on `λ_max(M)`.
    Adaptive,
}

impl fmt::Display for StepSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StepSize::Fixed(g) => write!(f, "{g}"),
            StepSize::Adaptive => f.write_str("adaptive"),
        }
    }
}

impl FromStr for StepSize {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("adaptive") {
            return Ok(StepSize::Adaptive);
        }
        s.parse().map(StepSize::Fixed).map_err(|_| {
            Error::InvalidConfig(format!("gamma must be a number or 'adaptive', got {s:?}"))
        })
    }
}

/// Initial output for the fixed-point iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WarmStart {
    /// Start from `y = 0`.
    Cold,
    /// Start from the previous sample's output.
    Previous,
}

impl fmt::Display for WarmStart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WarmStart::Cold => "cold",
            WarmStart::Previous => "previous",
        })
    }
}

impl FromStr for WarmStart {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cold" => Ok(WarmStart::Cold),
            "previous" => Ok(WarmStart::Previous),
            _ => Err(Error::InvalidConfig(format!(
                "warm_start must be 'cold' or 'previous', got {s:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparams {
    pub gamma: StepSize,
    pub eta: LearningRate,
    /// Ratio between the `W` and `M` learning rates.
    pub tau: f64,
    pub dyn_tol: f64,
    pub dyn_max_iter: usize,
    pub warm_start: WarmStart,
}

impl Default for Hyperparams {
    fn default() -> Self {
        // Calibrated on the 3-source sparse-uniform problem.
        Self {
            gamma: StepSize::Adaptive,
            eta: LearningRate::Decay {
                eta0: 0.015,
                decay: 1e-3,
            },
            tau: 0.1,
            dyn_tol: 1e-6,
            dyn_max_iter: 500,
            warm_start: WarmStart::Cold,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if let StepSize::Fixed(g) = self.gamma {
            if !(g > 0.0 && g.is_finite()) {
                return bad(format!("gamma must be > 0, got {g}"));
            }
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad(format!("tau must be > 0, got {}", self.tau));
        }
        if !(self.dyn_tol > 0.0) {
            return bad(format!("dyn_tol must be > 0, got {}", self.dyn_tol));
        }
        if self.dyn_max_iter == 0 {
            return bad("dyn_max_iter must be >= 1".into());
        }
        match self.eta {
            LearningRate::Constant(eta) if !(eta >= 0.0) => {
                return bad(format!("eta must be >= 0, got {eta}"))
            }
            LearningRate::Decay { eta0, decay } if !(eta0 >= 0.0 && decay >= 0.0) => {
                return bad(format!(
                    "eta0 and eta_decay must be >= 0, got {eta0}, {decay}"
                ))
            }
            _ => {}
        }
        let peak = self.eta.peak();
        if !(peak < self.tau) {
            return bad(format!(
                "learning rate {peak} must stay below tau = {} to keep M positive definite",
                self.tau
            ));
        }
        Ok(())
    }

    /// Effective `η_t`, capped at `0.95 τ`.
    pub fn eta_at(&self, t: u64) -> f64 {
        self.eta.at(t).min(ETA_CAP_FRACTION * self.tau)
    }

    /// Flat key/value form used by checkpoints and run metadata.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        let (eta0, decay) = match self.eta {
            LearningRate::Constant(e) => (e, 0.0),
            LearningRate::Decay { eta0, decay } => (eta0, decay),
        };
        vec![
            ("gamma", self.gamma.to_string()),
            ("eta0", eta0.to_string()),
            ("eta_decay", decay.to_string()),
            ("tau", self.tau.to_string()),
            ("dyn_tol", self.dyn_tol.to_string()),
            ("dyn_max_iter", self.dyn_max_iter.to_string()),
            ("warm_start", self.warm_start.to_string()),
        ]
    }

    /// Overrides one field from its key/value form. Returns `Ok(false)` for
    /// unknown keys.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        let num = |v: &str| -> Result<f64> {
            v.trim()
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("{key} must be a number, got {v:?}")))
        };
        let (eta0, decay) = match self.eta {
            LearningRate::Constant(e) => (e, 0.0),
            LearningRate::Decay { eta0, decay } => (eta0, decay),
        };
        match key {
            "gamma" => self.gamma = value.trim().parse()?,
            "eta0" => self.eta = schedule(num(value)?, decay),
            "eta_decay" => self.eta = schedule(eta0, num(value)?),
            "tau" => self.tau = num(value)?,
            "dyn_tol" => self.dyn_tol = num(value)?,
            "dyn_max_iter" => {
                self.dyn_max_iter = value.trim().parse().map_err(|_| {
                    Error::InvalidConfig(format!("dyn_max_iter must be an integer, got {value:?}"))
                })?
            }
            "warm_start" => self.warm_start = value.trim().parse()?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}

fn schedule(eta0: f64, decay: f64) -> LearningRate {
    if decay == 0.0 {
        LearningRate::Constant(eta0)
    } else {
        LearningRate::Decay { eta0, decay }
    }
}
