//! Continuous-action bandit where an actor-critic learns from a buffer that
//! covers only part of the action range. Wide policies query the critic
//! outside that coverage, and its extrapolation can drag the policy off the
//! reward modes.

pub mod actor;
pub mod env;
pub mod mlp;
pub mod sac;

pub use actor::{ActionSample, Head, SquashedGaussianActor};
pub use env::{env_reward, prefill_buffer, BimodalBanditEnv, RewardShape, ToyTransition};
pub use mlp::{Activation, Gradients, Layer, Mlp, Optimizer, OptimizerKind};
pub use sac::{
    actor_loss_and_grad, critic_inputs, critic_loss_and_grad, train_toy, write_snapshot_csv, Snapshot, SnapshotRow,
    ToyAlphaMode, ToyConfig, ToyRun, ToyTrainer,
};
