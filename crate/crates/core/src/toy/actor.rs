//! Tanh-squashed diagonal Gaussian policy over a bounded scalar action.

use std::f64::consts::{LN_2, PI, SQRT_2};

use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;

use super::env::{ACTION_HIGH, ACTION_LOW, STATE_DIM};
use super::mlp::{Activation, ForwardCache, Gradients, Mlp};
use crate::error::{invalid, Result};
use crate::metrics::{ActionDistribution, DiagGaussian, Policy, LOG_STD_MAX, LOG_STD_MIN};
use crate::qed::ActionSampler;

const HALF_LOG_TWO_PI: f64 = 0.918_938_533_204_672_8;

/// `log(1 + eˣ)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// Network head output for one state, with the clamped log-std.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Head {
    pub mean: f64,
    pub log_std: f64,
    /// Whether the raw log-std was clamped (its gradient is then zero).
    pub clamped: bool,
}

/// Reparameterised draw `u = μ + σ ε`, `a = squash(u)`, with its log-density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionSample {
    pub noise: f64,
    pub pre_squash: f64,
    pub action: f64,
    pub log_prob: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SquashedGaussianActor {
    net: Mlp,
    low: f64,
    high: f64,
}

impl SquashedGaussianActor {
    pub fn new<R: Rng + ?Sized>(hidden: &[usize], activation: Activation, rng: &mut R) -> Result<Self> {
        let sizes: Vec<usize> = std::iter::once(STATE_DIM).chain(hidden.iter().copied()).chain([2]).collect();
        Self::from_network(Mlp::new(&sizes, activation, rng)?)
    }

    pub fn from_network(net: Mlp) -> Result<Self> {
        if net.output_dim() != 2 {
            return invalid(format!("actor network must output (mean, log_std), got width {}", net.output_dim()));
        }
        Ok(Self {
            net,
            low: ACTION_LOW,
            high: ACTION_HIGH,
        })
    }

    pub fn network(&self) -> &Mlp {
        &self.net
    }

    pub fn network_mut(&mut self) -> &mut Mlp {
        &mut self.net
    }

    pub fn scale(&self) -> f64 {
        0.5 * (self.high - self.low)
    }

    pub fn squash(&self, u: f64) -> f64 {
        self.low + self.scale() * (u.tanh() + 1.0)
    }

    /// Inverse of [`Self::squash`]; errors on or beyond the bounds.
    pub fn unsquash(&self, a: f64) -> Result<f64> {
        if !(a > self.low && a < self.high) {
            return invalid(format!("action {a} is not strictly inside ({}, {})", self.low, self.high));
        }
        let u = ((a - self.low) / self.scale() - 1.0).atanh();
        if !u.is_finite() {
            return invalid(format!("action {a} is too close to the bound for a finite log-density"));
        }
        Ok(u)
    }

    /// `log |da/du| = log(scale) + log(1 − tanh² u)`, evaluated stably.
    pub fn log_abs_det(&self, u: f64) -> f64 {
        self.scale().ln() + 2.0 * (LN_2 - u - softplus(-2.0 * u))
    }

    /// `d/du log |da/du| = −2 tanh u`.
    pub fn log_abs_det_grad(u: f64) -> f64 {
        -2.0 * u.tanh()
    }

    /// Heads for a batch of states, with the forward cache for backprop.
    pub fn heads(&self, states: ArrayView2<f64>) -> Result<(Vec<Head>, ForwardCache)> {
        let (out, cache) = self.net.forward_cached(states)?;
        let heads = out
            .rows()
            .into_iter()
            .map(|r| Head {
                mean: r[0],
                log_std: r[1].clamp(LOG_STD_MIN, LOG_STD_MAX),
                clamped: !(LOG_STD_MIN..=LOG_STD_MAX).contains(&r[1]),
            })
            .collect();
        Ok((heads, cache))
    }

    pub fn head(&self, state: &[f64]) -> Result<Head> {
        let x = ArrayView2::from_shape((1, state.len()), state).map_err(|e| crate::Error::Internal(e.to_string()))?;
        Ok(self.heads(x)?.0[0])
    }

    /// Log-density of the squashed action at pre-squash value `u`.
    pub fn log_prob_pre_squash(&self, head: &Head, u: f64) -> f64 {
        let z = (u - head.mean) / head.log_std.exp();
        -0.5 * z * z - head.log_std - HALF_LOG_TWO_PI - self.log_abs_det(u)
    }

    pub fn squashed_log_prob(&self, state: &[f64], action: f64) -> Result<f64> {
        let u = self.unsquash(action)?;
        Ok(self.log_prob_pre_squash(&self.head(state)?, u))
    }

    pub fn sample_with_noise(&self, head: &Head, noise: f64) -> ActionSample {
        let u = head.mean + head.log_std.exp() * noise;
        // Keep the action strictly inside the bounds when tanh saturates.
        let action = self.squash(u).clamp(self.low.next_up(), self.high.next_down());
        ActionSample {
            noise,
            pre_squash: u,
            action,
            log_prob: self.log_prob_pre_squash(head, u),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, head: &Head, rng: &mut R) -> ActionSample {
        self.sample_with_noise(head, rng.sample(StandardNormal))
    }

    /// The pre-squash Gaussian at `state`.
    pub fn distribution(&self, state: &[f64]) -> Result<DiagGaussian> {
        let h = self.head(state)?;
        DiagGaussian::new(vec![h.mean], vec![h.log_std])
    }

    /// Probability mass of each grid cell `[edges[i], edges[i+1]]` divided by its width.
    pub fn cell_density(&self, state: &[f64], edges: &[f64]) -> Result<Vec<f64>> {
        let h = self.head(state)?;
        let sigma = h.log_std.exp();
        let cdf = |a: f64| -> f64 {
            if a <= self.low {
                0.0
            } else if a >= self.high {
                1.0
            } else {
                let u = ((a - self.low) / self.scale() - 1.0).atanh();
                normal_cdf((u - h.mean) / sigma)
            }
        };
        let cdfs: Vec<f64> = edges.iter().map(|&e| cdf(e)).collect();
        Ok(cdfs.windows(2).zip(edges.windows(2)).map(|(c, e)| (c[1] - c[0]) / (e[1] - e[0])).collect())
    }

    /// `E[f(a)]` under the squashed policy, by trapezoidal quadrature over the
    /// standard normal noise on `[−10, 10]`.
    pub fn expectation(&self, state: &[f64], mut f: impl FnMut(f64) -> Result<f64>) -> Result<f64> {
        const POINTS: usize = 4001;
        let h = self.head(state)?;
        let sigma = h.log_std.exp();
        let step = 20.0 / (POINTS - 1) as f64;
        let mut total = 0.0;
        for i in 0..POINTS {
            let eps = -10.0 + i as f64 * step;
            let w = if i == 0 || i == POINTS - 1 { 0.5 } else { 1.0 };
            let a = self.squash(h.mean + sigma * eps);
            total += w * (-0.5 * eps * eps).exp() * f(a)?;
        }
        Ok(total * step / (2.0 * PI).sqrt())
    }

    /// Mean of the squashed action distribution.
    pub fn mean_action(&self, state: &[f64]) -> Result<f64> {
        self.expectation(state, Ok)
    }

    /// Squashed head mean, the deterministic evaluation action.
    pub fn deterministic_action(&self, state: &[f64]) -> Result<f64> {
        Ok(self.squash(self.head(state)?.mean))
    }

    /// Parameter gradients given `∂L/∂mean` and `∂L/∂log_std` per batch row.
    pub fn backward(&self, heads: &[Head], cache: &ForwardCache, grad_mean: &Array1<f64>, grad_log_std: &Array1<f64>) -> Result<Gradients> {
        let mut g = Array2::zeros((heads.len(), 2));
        for (i, h) in heads.iter().enumerate() {
            g[[i, 0]] = grad_mean[i];
            g[[i, 1]] = if h.clamped { 0.0 } else { grad_log_std[i] };
        }
        Ok(self.net.backward(cache, g.view())?.0)
    }
}

impl ActionSampler<[f64; STATE_DIM], f64> for SquashedGaussianActor {
    fn sample_action(&self, state: &[f64; STATE_DIM], rng: &mut dyn rand::RngCore) -> Result<f64> {
        let head = self.head(state)?;
        Ok(self.sample_with_noise(&head, rng.sample(StandardNormal)).action)
    }
}

impl Policy<Vec<f64>> for SquashedGaussianActor {
    fn action_distribution(&self, state: &Vec<f64>) -> Result<ActionDistribution> {
        Ok(ActionDistribution::Gaussian(self.distribution(state)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng_from_seed;
    use crate::toy::mlp::Layer;

    /// Actor whose head is the constant `(mean, log_std)`.
    fn constant_actor(mean: f64, log_std: f64) -> SquashedGaussianActor {
        let layer = Layer {
            weight: Array2::zeros((2, STATE_DIM)),
            bias: Array1::from(vec![mean, log_std]),
        };
        SquashedGaussianActor::from_network(Mlp::from_layers(vec![layer], Activation::Tanh).unwrap()).unwrap()
    }

    #[test]
    fn centre_log_prob_by_hand() {
        let actor = constant_actor(0.0, 0.0);
        let lp = actor.squashed_log_prob(&[1.0, 0.0], 0.0).unwrap();
        let expected = -0.5 * (2.0 * PI).ln() - 5f64.ln();
        assert!((lp - expected).abs() < 1e-12);
        assert!(actor.squashed_log_prob(&[1.0, 0.0], 5.0).is_err());
        assert!(actor.squashed_log_prob(&[1.0, 0.0], -5.0).is_err());
    }

    #[test]
    fn stable_jacobian_matches_naive_form() {
        let actor = constant_actor(0.0, 0.0);
        for u in [-3.0, -0.7, 0.0, 0.4, 2.5] {
            let naive = (5.0 * (1.0 - f64::tanh(u).powi(2))).ln();
            assert!((actor.log_abs_det(u) - naive).abs() < 1e-12);
        }
        assert!(actor.log_abs_det(40.0).is_finite());
    }

    #[test]
    fn log_prob_peaks_at_squashed_mean_for_small_sigma() {
        let actor = constant_actor(-0.4, -4.0);
        let centre = actor.squash(-0.4);
        let lp_centre = actor.squashed_log_prob(&[1.0, 0.0], centre).unwrap();
        for d in [-0.2, -0.05, 0.05, 0.2] {
            assert!(actor.squashed_log_prob(&[1.0, 0.0], centre + d).unwrap() < lp_centre);
        }
    }

    #[test]
    fn cell_density_sums_to_one() {
        let actor = constant_actor(0.8, 0.3);
        let edges: Vec<f64> = (0..=512).map(|i| -5.0 + 10.0 * i as f64 / 512.0).collect();
        let dens = actor.cell_density(&[1.0, 0.0], &edges).unwrap();
        let total: f64 = dens.iter().map(|d| d * 10.0 / 512.0).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn samples_stay_inside_bounds() {
        let actor = constant_actor(30.0, 2.0);
        let mut rng = rng_from_seed(0);
        let head = actor.head(&[1.0, 0.0]).unwrap();
        for _ in 0..1000 {
            let s = actor.sample(&head, &mut rng);
            assert!(s.action > -5.0 && s.action < 5.0);
        }
    }

    #[test]
    fn log_std_is_clamped() {
        let actor = constant_actor(0.0, 9.0);
        let h = actor.head(&[1.0, 0.0]).unwrap();
        assert_eq!(h.log_std, LOG_STD_MAX);
        assert!(h.clamped);
    }
}
