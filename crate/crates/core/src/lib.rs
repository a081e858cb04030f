//! Numerical laboratory for behavior-consistent maximum-entropy reinforcement learning.
//!
//! The crate is organised bottom-up:
//!
//! - [`mdp`]: finite MDPs, Boltzmann policies, hard and soft Bellman backups.
//! - [`coupled`]: the disagreement-scaled shared temperature and the coupled
//!   soft iteration, with executable KL and error bounds.
//! - [`metrics`]: KL divergences, expectiles, inter-run variability, action
//!   distance, IQM with bootstrap intervals and correlations.
//! - [`qed`]: the expectile-disagreement temperature schedule and the
//!   target-entropy temperature floor.
//! - [`tabular`]: sampled soft Q-learning with double tabular critics and
//!   multi-seed consistency experiments.
//! - [`toy`]: the single-state bimodal bandit with a small squashed-Gaussian
//!   actor-critic.

pub mod coupled;
pub mod error;
pub mod mdp;
pub mod metrics;
pub mod qed;
pub mod replay;
pub mod tabular;
pub mod toy;

pub use error::{Error, Result};

use rand::SeedableRng;

/// Random stream used by every seeded routine in the crate.
pub type LabRng = rand_chacha::ChaCha8Rng;

/// Builds the deterministic random stream for `seed`.
pub fn rng_from_seed(seed: u64) -> LabRng {
    LabRng::seed_from_u64(seed)
}
