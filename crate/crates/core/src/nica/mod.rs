//! The single-layer nonnegative ICA network: output dynamics, online and
//! batch learning, objective diagnostics, checkpoints.

mod checkpoint;
mod dynamics;
mod objective;
mod offline;
mod online;
mod params;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use dynamics::{fast_dynamics, kkt_tolerance, kkt_violation, StepOutput, ADAPTIVE_STEP};
pub use objective::{lagrangian_value, nsm_objective, nsm_objective_with};
pub use offline::{offline_fit, offline_fit_from, OfflineConfig, OfflineResult};
pub use online::{online_step, run_online, BioNicaState};
pub use params::{Hyperparams, LearningRate, StepSize, WarmStart, ETA_CAP_FRACTION};
