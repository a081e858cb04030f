use serde::{Deserialize, Serialize};

use super::divergence::{symmetric_kl_categorical, symmetric_kl_diag_gaussian, DiagGaussian};
use crate::error::{invalid, Result};
use crate::mdp::CategoricalPolicy;

/// An action distribution emitted by a policy at one state.
#[derive(Debug, Clone, PartialEq)]
pub enum ActionDistribution {
    Categorical(Vec<f64>),
    Gaussian(DiagGaussian),
}

/// Pointwise divergence used to compare two policies at a state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Divergence {
    CategoricalSymmetricKl,
    GaussianSymmetricKl,
}

impl Divergence {
    pub fn evaluate(self, a: &ActionDistribution, b: &ActionDistribution) -> Result<f64> {
        match (self, a, b) {
            (Divergence::CategoricalSymmetricKl, ActionDistribution::Categorical(p), ActionDistribution::Categorical(q)) => {
                symmetric_kl_categorical(p, q)
            }
            (Divergence::GaussianSymmetricKl, ActionDistribution::Gaussian(p), ActionDistribution::Gaussian(q)) => {
                symmetric_kl_diag_gaussian(p, q)
            }
            _ => invalid(format!("{self:?} cannot compare these action distributions")),
        }
    }
}

/// Anything that maps a state to an action distribution.
pub trait Policy<S> {
    fn action_distribution(&self, state: &S) -> Result<ActionDistribution>;
}

impl<S, P: Policy<S> + ?Sized> Policy<S> for &P {
    fn action_distribution(&self, state: &S) -> Result<ActionDistribution> {
        (**self).action_distribution(state)
    }
}

impl Policy<usize> for CategoricalPolicy {
    fn action_distribution(&self, state: &usize) -> Result<ActionDistribution> {
        if *state >= self.num_states() {
            return invalid(format!("state {state} out of range"));
        }
        Ok(ActionDistribution::Categorical(self.row(*state).to_vec()))
    }
}

/// The shared states on which every policy pair is compared.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalStateSet<S> {
    states: Vec<S>,
    provenance: String,
}

impl<S> EvalStateSet<S> {
    pub fn new(states: Vec<S>, provenance: impl Into<String>) -> Result<Self> {
        if states.is_empty() {
            return invalid("evaluation state set is empty");
        }
        Ok(Self {
            states,
            provenance: provenance.into(),
        })
    }

    pub fn states(&self) -> &[S] {
        &self.states
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

impl EvalStateSet<Vec<f64>> {
    /// Feature-vector states; all vectors must share one dimension.
    pub fn from_features(states: Vec<Vec<f64>>, provenance: impl Into<String>) -> Result<Self> {
        let dim = states.first().map(Vec::len);
        if states.iter().any(|s| Some(s.len()) != dim) {
            return invalid("evaluation states have inconsistent dimensions");
        }
        Self::new(states, provenance)
    }
}

/// Inter-run variability with the bookkeeping of excluded comparisons.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Variability {
    pub value: f64,
    /// Ordered policy pairs that contributed.
    pub pairs: usize,
    /// Pointwise (pair, state) divergences dropped for being infinite or NaN.
    pub excluded: usize,
}

/// `V = 1/(I(I−1)) Σ_{i≠j} D(π_i, π_j)`, where `D` averages the pointwise
/// divergence over the shared evaluation states.
pub fn inter_run_variability<S, P: Policy<S>>(
    policies: &[P],
    states: &EvalStateSet<S>,
    divergence: Divergence,
) -> Result<f64> {
    Ok(inter_run_variability_detailed(policies, states, divergence)?.value)
}

pub fn inter_run_variability_detailed<S, P: Policy<S>>(
    policies: &[P],
    states: &EvalStateSet<S>,
    divergence: Divergence,
) -> Result<Variability> {
    if policies.len() < 2 {
        return invalid(format!("inter-run variability needs at least 2 policies, got {}", policies.len()));
    }
    let outputs = policies
        .iter()
        .map(|p| states.states().iter().map(|s| p.action_distribution(s)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;

    let mut total = 0.0;
    let mut pairs = 0;
    let mut excluded = 0;
    for i in 0..outputs.len() {
        for j in 0..outputs.len() {
            if i == j {
                continue;
            }
            let mut sum = 0.0;
            let mut kept = 0;
            for (a, b) in outputs[i].iter().zip(&outputs[j]) {
                let d = divergence.evaluate(a, b)?;
                if d.is_finite() {
                    sum += d;
                    kept += 1;
                } else {
                    excluded += 1;
                }
            }
            if kept > 0 {
                total += sum / kept as f64;
                pairs += 1;
            }
        }
    }
    if excluded > 0 {
        log::warn!("inter-run variability excluded {excluded} non-finite pointwise divergences");
    }
    if pairs == 0 {
        return invalid("every policy comparison was non-finite");
    }
    Ok(Variability {
        value: total / pairs as f64,
        pairs,
        excluded,
    })
}

/// Sum over timesteps of the mean pairwise Euclidean distance between the
/// policies' actions. `rollouts[i][t]` is policy `i`'s action at step `t`.
pub fn cumulative_action_distance(rollouts: &[Vec<Vec<f64>>]) -> Result<f64> {
    if rollouts.len() < 2 {
        return invalid("action distance needs at least 2 rollouts");
    }
    let horizon = rollouts[0].len();
    let dim = rollouts[0].first().map_or(0, Vec::len);
    if rollouts.iter().any(|r| r.len() != horizon || r.iter().any(|a| a.len() != dim)) {
        return invalid("rollouts must share length and action dimension");
    }
    let n = rollouts.len();
    let num_pairs = (n * (n - 1) / 2) as f64;
    let mut total = 0.0;
    for (i, ri) in rollouts.iter().enumerate() {
        for rj in &rollouts[i + 1..] {
            for (ai, aj) in ri.iter().zip(rj) {
                total += ai.iter().zip(aj).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            }
        }
    }
    Ok(total / num_pairs)
}
