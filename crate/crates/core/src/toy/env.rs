//! Single-state, two-step bandit with a bimodal reward over `(−5, 5)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::replay::ReplayBuffer;

pub const ACTION_LOW: f64 = -5.0;
pub const ACTION_HIGH: f64 = 5.0;
pub const MODE_CENTERS: [f64; 2] = [-2.0, 2.0];
pub const MODE_VARIANCE: f64 = 0.5;
pub const HORIZON: usize = 2;
pub const DISCOUNT: f64 = 0.9;
/// Width of the one-hot timestep feature.
pub const STATE_DIM: usize = HORIZON;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RewardShape {
    /// Equal-weight mixture of the two mode densities.
    #[default]
    Density,
    /// Sum of two unit-height Gaussian bumps with the same centres and variance.
    UnitBumps,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BimodalBanditEnv {
    pub shape: RewardShape,
}

impl BimodalBanditEnv {
    pub fn new(shape: RewardShape) -> Self {
        Self { shape }
    }

    /// Reward of action `a`; errors outside the open action interval.
    pub fn reward(&self, a: f64) -> Result<f64> {
        if !(a > ACTION_LOW && a < ACTION_HIGH) {
            return invalid(format!("action {a} outside ({ACTION_LOW}, {ACTION_HIGH})"));
        }
        let bump = |c: f64| (-(a - c).powi(2) / (2.0 * MODE_VARIANCE)).exp();
        let sum = bump(MODE_CENTERS[0]) + bump(MODE_CENTERS[1]);
        Ok(match self.shape {
            RewardShape::Density => 0.5 * sum / (2.0 * std::f64::consts::PI * MODE_VARIANCE).sqrt(),
            RewardShape::UnitBumps => sum,
        })
    }

    /// One-hot feature of timestep `t`.
    pub fn features(t: usize) -> [f64; STATE_DIM] {
        let mut f = [0.0; STATE_DIM];
        f[t.min(HORIZON - 1)] = 1.0;
        f
    }
}

/// Free function form of [`BimodalBanditEnv::reward`] for the default shape.
pub fn env_reward(a: f64) -> Result<f64> {
    BimodalBanditEnv::default().reward(a)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyTransition {
    pub state: [f64; STATE_DIM],
    pub action: f64,
    pub reward: f64,
    pub next_state: [f64; STATE_DIM],
    pub done: bool,
}

/// Inserts `n` transitions from consecutive two-step episodes whose actions are
/// uniform on the open interval `(low, high)`.
pub fn prefill_buffer<R: Rng + ?Sized>(
    buffer: &mut ReplayBuffer<ToyTransition>,
    env: &BimodalBanditEnv,
    n: usize,
    low: f64,
    high: f64,
    rng: &mut R,
) -> Result<()> {
    if n > buffer.capacity() {
        return invalid(format!("prefill of {n} exceeds capacity {}", buffer.capacity()));
    }
    if !(ACTION_LOW <= low && low < high && high <= ACTION_HIGH) {
        return invalid(format!("prefill interval ({low}, {high}) must lie inside the action range"));
    }
    for i in 0..n {
        let t = i % HORIZON;
        let action = loop {
            let a = rng.random_range(low..high);
            if a > low {
                break a;
            }
        };
        let done = t + 1 == HORIZON;
        buffer.push(ToyTransition {
            state: BimodalBanditEnv::features(t),
            action,
            reward: env.reward(action)?,
            next_state: BimodalBanditEnv::features(t + 1),
            done,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng_from_seed;

    #[test]
    fn reward_shape() {
        let env = BimodalBanditEnv::default();
        assert_eq!(env.reward(-2.0).unwrap(), env.reward(2.0).unwrap());
        assert!(env.reward(0.0).unwrap() < env.reward(2.0).unwrap());
        assert!((env.reward(2.0).unwrap() - 0.28209).abs() < 1e-5);
        assert!(env.reward(5.0).is_err());
        assert!(env.reward(f64::NAN).is_err());
        let bumps = BimodalBanditEnv::new(RewardShape::UnitBumps);
        assert!((bumps.reward(2.0).unwrap() - 1.0).abs() < 1e-6);
        for a in [0.3, 1.1, 2.4, 4.9] {
            assert_eq!(env.reward(a).unwrap(), env.reward(-a).unwrap());
        }
    }

    #[test]
    fn prefill_respects_interval_and_capacity() {
        let mut buf = ReplayBuffer::new(1000).unwrap();
        let env = BimodalBanditEnv::default();
        prefill_buffer(&mut buf, &env, 1000, -3.0, 0.0, &mut rng_from_seed(0)).unwrap();
        assert_eq!(buf.len(), 1000);
        assert_eq!(buf.insertions(), 1000);
        assert!(buf.iter().all(|t| t.action > -3.0 && t.action < 0.0));
        assert_eq!(buf.iter().filter(|t| t.done).count(), 500);
        let mut small = ReplayBuffer::new(10).unwrap();
        assert!(prefill_buffer(&mut small, &env, 11, -3.0, 0.0, &mut rng_from_seed(0)).is_err());
    }
}
