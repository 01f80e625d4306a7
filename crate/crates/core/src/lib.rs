//! Single-layer online nonnegative independent component analysis.
//!
//! The crate separates linear mixtures `x = A s` of independent, nonnegative,
//! well-grounded sources. The main algorithm ([`nica::BioNicaState`]) runs a
//! single layer of `d` output units whose feedforward weights `W` learn by a
//! Hebbian rule and whose lateral weights `M` learn by an anti-Hebbian rule,
//! with outputs computed by a rectified recurrent fixed-point iteration. It
//! needs no separate whitening stage.
//!
//! Supporting modules:
//!
//! * [`dataset`] sparse-uniform sources, Gaussian mixing, image sources, CSV/PGM IO
//! * [`whitening`] noncentered whitening and the Moore-Penrose pseudoinverse
//! * [`baselines`] Nonnegative PCA on offline-prewhitened inputs
//! * [`metrics`] permutation-matched error trajectories and correlations
//! * [`experiment`] end-to-end pipelines used by the CLI and acceptance tests

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod dataset;
mod error;
pub mod experiment;
pub mod linalg;
pub mod metrics;
pub mod nica;
pub mod rng;
pub mod whitening;

pub use error::{Error, Result};
