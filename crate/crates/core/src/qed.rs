//! Expectile-disagreement temperature schedule and the target-entropy floor.
//!
//! For a state `s`, `N` actions are drawn from the current policy, the absolute
//! gap `|Q₁(s,a) − Q₂(s,a)|` is taken at each, and their `τ`-expectile `Δ̃(s)`
//! sets `α(s) = clip(Δ̃(s) / (k d), α_min, α_max)`. The floor `α_min` is either
//! fixed or the live temperature of a target-entropy learner.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::metrics::{expectile, weighted_expectile};

pub const DEFAULT_TAU: f64 = 0.9;
pub const DEFAULT_NUM_ACTION_SAMPLES: usize = 8;
pub const DEFAULT_ALPHA_MAX: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QedConfig {
    /// Divisor controlling how strongly disagreement raises the temperature.
    pub k: f64,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_num_action_samples")]
    pub num_action_samples: usize,
    #[serde(default = "default_alpha_max")]
    pub alpha_max: f64,
    #[serde(default = "default_action_dim")]
    pub action_dim: usize,
}

fn default_tau() -> f64 {
    DEFAULT_TAU
}

fn default_num_action_samples() -> usize {
    DEFAULT_NUM_ACTION_SAMPLES
}

fn default_alpha_max() -> f64 {
    DEFAULT_ALPHA_MAX
}

fn default_action_dim() -> usize {
    1
}

impl Default for QedConfig {
    fn default() -> Self {
        Self {
            k: 0.2,
            tau: DEFAULT_TAU,
            num_action_samples: DEFAULT_NUM_ACTION_SAMPLES,
            alpha_max: DEFAULT_ALPHA_MAX,
            action_dim: 1,
        }
    }
}

impl QedConfig {
    pub fn with_k(k: f64) -> Self {
        Self { k, ..Self::default() }
    }

    /// Checks every field; the error message names the offending field.
    pub fn validate(&self) -> Result<()> {
        if self.k.is_nan() || self.k <= 0.0 {
            return invalid(format!("k must be positive, got {}", self.k));
        }
        if !(self.tau > 0.5 && self.tau < 1.0) {
            return invalid(format!("tau must lie in (0.5, 1), got {}", self.tau));
        }
        if self.num_action_samples == 0 {
            return invalid("num_action_samples must be at least 1");
        }
        if !(self.alpha_max > 0.0 && self.alpha_max.is_finite()) {
            return invalid(format!("alpha_max must be positive and finite, got {}", self.alpha_max));
        }
        if self.action_dim == 0 {
            return invalid("action_dim must be at least 1");
        }
        Ok(())
    }
}

/// A critic evaluated at `(state, action)`.
pub trait ActionValue<S: ?Sized, A: ?Sized> {
    fn value(&self, state: &S, action: &A) -> Result<f64>;
}

impl<S: ?Sized, A: ?Sized, F> ActionValue<S, A> for F
where
    F: Fn(&S, &A) -> Result<f64>,
{
    fn value(&self, state: &S, action: &A) -> Result<f64> {
        self(state, action)
    }
}

/// Draws actions from the current policy.
pub trait ActionSampler<S: ?Sized, A> {
    fn sample_action(&self, state: &S, rng: &mut dyn rand::RngCore) -> Result<A>;
}

/// `τ`-expectile of `|Q₁ − Q₂|` over `N` actions drawn from `policy` at `state`.
pub fn sample_disagreement<S, A, C1, C2, P, R>(
    critic1: &C1,
    critic2: &C2,
    state: &S,
    policy: &P,
    config: &QedConfig,
    rng: &mut R,
) -> Result<f64>
where
    S: ?Sized,
    C1: ActionValue<S, A> + ?Sized,
    C2: ActionValue<S, A> + ?Sized,
    P: ActionSampler<S, A> + ?Sized,
    R: Rng,
{
    config.validate()?;
    let mut gaps = Vec::with_capacity(config.num_action_samples);
    for _ in 0..config.num_action_samples {
        let action = policy.sample_action(state, rng)?;
        let gap = (critic1.value(state, &action)? - critic2.value(state, &action)?).abs();
        if !gap.is_finite() {
            return invalid("critic values must be finite");
        }
        gaps.push(gap);
    }
    expectile(&gaps, config.tau)
}

/// Exact policy-weighted expectile of `|q1 − q2|` over a categorical action set.
pub fn exact_categorical_disagreement(q1_row: &[f64], q2_row: &[f64], probs: &[f64], tau: f64) -> Result<f64> {
    if q1_row.len() != q2_row.len() || q1_row.len() != probs.len() {
        return invalid("rows and probabilities must have equal length");
    }
    let gaps: Vec<f64> = q1_row.iter().zip(q2_row).map(|(a, b)| (a - b).abs()).collect();
    weighted_expectile(&gaps, probs, tau)
}

/// `clip(disagreement / (k d), alpha_min, alpha_max)`.
pub fn alpha_qed(disagreement: f64, config: &QedConfig, alpha_min: f64) -> Result<f64> {
    config.validate()?;
    if !(alpha_min > 0.0 && alpha_min.is_finite()) {
        return invalid(format!("alpha_min must be positive and finite, got {alpha_min}"));
    }
    if alpha_min > config.alpha_max {
        return invalid(format!("alpha_min {alpha_min} exceeds alpha_max {}", config.alpha_max));
    }
    if !disagreement.is_finite() || disagreement < 0.0 {
        return invalid(format!("disagreement must be finite and non-negative, got {disagreement}"));
    }
    let raw = disagreement / (config.k * config.action_dim as f64);
    Ok(raw.clamp(alpha_min, config.alpha_max))
}

/// Learned temperature driven toward a fixed target entropy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetEntropyState {
    log_alpha: f64,
    target_entropy: f64,
    step_size: f64,
}

impl TargetEntropyState {
    pub fn new(initial_alpha: f64, target_entropy: f64, step_size: f64) -> Result<Self> {
        if !(initial_alpha > 0.0 && initial_alpha.is_finite()) {
            return invalid(format!("initial alpha must be positive and finite, got {initial_alpha}"));
        }
        if !target_entropy.is_finite() {
            return invalid("target entropy must be finite");
        }
        if !(step_size > 0.0 && step_size.is_finite()) {
            return invalid(format!("step size must be positive and finite, got {step_size}"));
        }
        Ok(Self {
            log_alpha: initial_alpha.ln(),
            target_entropy,
            step_size,
        })
    }

    /// `−d` for a `d`-dimensional continuous action space.
    pub fn continuous_target(action_dim: usize) -> f64 {
        -(action_dim as f64)
    }

    /// `½ log|A|` for a categorical action set.
    pub fn categorical_target(num_actions: usize) -> f64 {
        0.5 * (num_actions as f64).ln()
    }

    pub fn log_alpha(&self) -> f64 {
        self.log_alpha
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    pub fn target_entropy(&self) -> f64 {
        self.target_entropy
    }

    pub fn step_size(&self) -> f64 {
        self.step_size
    }

    /// Gradient of `E[α(−log π − H)]` with respect to `log α`.
    pub fn gradient(&self, batch_log_probs: &[f64]) -> Result<f64> {
        if batch_log_probs.is_empty() {
            return invalid("log-prob batch is empty");
        }
        if batch_log_probs.iter().any(|lp| !lp.is_finite()) {
            return invalid("log-probs must be finite");
        }
        let mean_gap = batch_log_probs.iter().map(|lp| -lp - self.target_entropy).sum::<f64>() / batch_log_probs.len() as f64;
        Ok(self.alpha() * mean_gap)
    }

    /// One descent step on `log α`.
    pub fn update(&self, batch_log_probs: &[f64]) -> Result<Self> {
        let grad = self.gradient(batch_log_probs)?;
        let log_alpha = self.log_alpha - self.step_size * grad;
        if !log_alpha.exp().is_finite() || log_alpha.exp() <= 0.0 {
            return Err(crate::Error::Internal(format!("temperature left the representable range (log alpha {log_alpha})")));
        }
        Ok(Self { log_alpha, ..*self })
    }
}

/// Source of the QED floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum AlphaFloor {
    Fixed { alpha_min: f64 },
    TargetEntropy { initial_alpha: f64, step_size: f64 },
}
