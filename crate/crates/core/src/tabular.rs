//! Sampled soft Q-learning with two tabular critics.
//!
//! Both critics regress toward one shared target built from their elementwise
//! minimum, `r + γ α(s') logsumexp(min(Q₁,Q₂)(s',·)/α(s'))`. The temperature is
//! fixed, learned toward a target entropy, or set per state by the
//! expectile-disagreement schedule. Seed sweeps measure how far the final
//! Boltzmann policies of independent runs drift apart.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::mdp::{
    argmax, boltzmann_log_policy, boltzmann_policy, policy_return, sample_index, soft_value, uniform_distribution,
    validate_pair, CategoricalPolicy, FiniteMdp, QTable, TemperatureField,
};
use crate::metrics::{correlation, inter_run_variability_detailed, CorrelationKind, Divergence, EvalStateSet};
use crate::qed::{alpha_qed, exact_categorical_disagreement, AlphaFloor, QedConfig, TargetEntropyState};
use crate::replay::ReplayBuffer;
use crate::{rng_from_seed, LabRng};

/// Fraction of training counted as "early" for the disagreement statistic.
pub const EARLY_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoubleCritic {
    pub q1: QTable,
    pub q2: QTable,
}

impl DoubleCritic {
    pub fn new(q1: QTable, q2: QTable) -> Result<Self> {
        if !q1.same_shape(&q2) {
            return invalid("critics have different shapes");
        }
        Ok(Self { q1, q2 })
    }

    /// Independent uniform noise in `[0, noise]` for each critic.
    pub fn random<R: Rng + ?Sized>(num_states: usize, num_actions: usize, noise: f64, rng: &mut R) -> Self {
        let q1 = QTable::random_uniform(num_states, num_actions, 0.0, noise, rng);
        let q2 = QTable::random_uniform(num_states, num_actions, 0.0, noise, rng);
        Self { q1, q2 }
    }

    pub fn min_row(&self, state: usize) -> Vec<f64> {
        self.q1.row(state).iter().zip(self.q2.row(state)).map(|(a, b)| a.min(*b)).collect()
    }

    pub fn min_table(&self) -> QTable {
        QTable::from_fn(self.q1.num_states(), self.q1.num_actions(), |s, a| self.q1.get(s, a).min(self.q2.get(s, a)))
    }

    /// `max_a |Q₁(s,a) − Q₂(s,a)|`.
    pub fn row_gap(&self, state: usize) -> f64 {
        self.q1
            .row(state)
            .iter()
            .zip(self.q2.row(state))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn mean_row_gap(&self) -> f64 {
        let n = self.q1.num_states();
        (0..n).map(|s| self.row_gap(s)).sum::<f64>() / n as f64
    }

    /// One TD step of both critics on `transition` toward the shared soft target.
    /// Returns the target.
    pub fn soft_q_update(&mut self, transition: &Transition, alpha_next: f64, lr: f64, discount: f64) -> Result<f64> {
        let (ns, na) = (self.q1.num_states(), self.q1.num_actions());
        if transition.state >= ns || transition.next_state >= ns || transition.action >= na {
            return invalid(format!("transition {transition:?} out of range for {ns}x{na} critics"));
        }
        if !(alpha_next > 0.0 && alpha_next.is_finite()) {
            return invalid(format!("temperature must be positive and finite, got {alpha_next}"));
        }
        if !(lr > 0.0 && lr <= 1.0) {
            return invalid(format!("learning rate must lie in (0, 1], got {lr}"));
        }
        if !transition.reward.is_finite() {
            return invalid("reward must be finite");
        }
        let target = transition.reward + discount * soft_value(&self.min_row(transition.next_state), alpha_next);
        let (s, a) = (transition.state, transition.action);
        for q in [&mut self.q1, &mut self.q2] {
            let old = q.get(s, a);
            q.set(s, a, old + lr * (target - old));
        }
        Ok(target)
    }
}

/// How the QED statistic averages over actions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DisagreementMode {
    /// `N` categorical draws from the current policy.
    #[default]
    Sampled,
    /// Policy-weighted expectile over every action.
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", deny_unknown_fields)]
pub enum TemperatureVariant {
    FixedAlpha {
        alpha: f64,
    },
    TargetEntropy {
        initial_alpha: f64,
        step_size: f64,
        /// Defaults to `½ log|A|`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        target_entropy: Option<f64>,
    },
    Qed {
        qed: QedConfig,
        floor: AlphaFloor,
        #[serde(default)]
        disagreement: DisagreementMode,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerConfig {
    pub variant: TemperatureVariant,
    pub learning_rate: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub replay_capacity: usize,
    /// Environment steps before the behaviour policy restarts from a uniform state.
    pub episode_length: usize,
    pub log_every: usize,
    pub init_noise: f64,
    pub eval_episodes: usize,
    pub eval_horizon: usize,
    pub seed: u64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            variant: TemperatureVariant::FixedAlpha { alpha: 0.05 },
            learning_rate: 0.1,
            steps: 2000,
            batch_size: 8,
            replay_capacity: 10_000,
            episode_length: 50,
            log_every: 100,
            init_noise: 0.1,
            eval_episodes: 10,
            eval_horizon: 20,
            seed: 0,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return invalid(format!("learning_rate must lie in (0, 1], got {}", self.learning_rate));
        }
        for (name, v) in [
            ("steps", self.steps),
            ("batch_size", self.batch_size),
            ("replay_capacity", self.replay_capacity),
            ("episode_length", self.episode_length),
            ("log_every", self.log_every),
            ("eval_episodes", self.eval_episodes),
            ("eval_horizon", self.eval_horizon),
        ] {
            if v == 0 {
                return invalid(format!("{name} must be at least 1"));
            }
        }
        if !(self.init_noise >= 0.0 && self.init_noise.is_finite()) {
            return invalid(format!("init_noise must be finite and non-negative, got {}", self.init_noise));
        }
        match self.variant {
            TemperatureVariant::FixedAlpha { alpha } => positive("variant.alpha", alpha)?,
            TemperatureVariant::TargetEntropy {
                initial_alpha,
                step_size,
                target_entropy,
            } => {
                positive("variant.initial_alpha", initial_alpha)?;
                positive("variant.step_size", step_size)?;
                if target_entropy.is_some_and(|h| !h.is_finite()) {
                    return invalid("variant.target_entropy must be finite");
                }
            }
            TemperatureVariant::Qed { qed, floor, .. } => {
                qed.validate().map_err(|e| Error::InvalidArgument(format!("variant.qed: {e}")))?;
                match floor {
                    AlphaFloor::Fixed { alpha_min } => {
                        positive("variant.floor.alpha_min", alpha_min)?;
                        if alpha_min > qed.alpha_max {
                            return invalid("variant.floor.alpha_min exceeds variant.qed.alpha_max");
                        }
                    }
                    AlphaFloor::TargetEntropy {
                        initial_alpha,
                        step_size,
                    } => {
                        positive("variant.floor.initial_alpha", initial_alpha)?;
                        positive("variant.floor.step_size", step_size)?;
                    }
                }
            }
        }
        Ok(())
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        invalid(format!("{name} must be positive and finite, got {v}"))
    }
}

/// One logged row of a training run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub step: usize,
    pub disagreement_mean: f64,
    pub alpha_mean: f64,
    pub alpha_max_state: f64,
    pub return_greedy: f64,
    pub return_soft: f64,
}

pub fn write_log_csv<W: Write>(rows: &[LogRow], writer: W) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    for row in rows {
        csv.serialize(row)?;
    }
    csv.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub seed: u64,
    pub log: Vec<LogRow>,
    /// Mean row gap over the first [`EARLY_FRACTION`] of updates.
    pub early_disagreement: f64,
    pub final_policy: CategoricalPolicy,
    pub final_alpha: Vec<f64>,
    pub critics: DoubleCritic,
    /// States visited by evaluation rollouts of the final policy, in visit order.
    pub eval_states: Vec<usize>,
}

impl RunRecord {
    pub fn final_q1(&self) -> &QTable {
        &self.critics.q1
    }

    pub fn final_row(&self) -> &LogRow {
        self.log.last().expect("a run always logs step 0")
    }
}

struct Learner<'a> {
    mdp: &'a FiniteMdp,
    config: LearnerConfig,
    critics: DoubleCritic,
    alpha: Vec<f64>,
    te: Option<TargetEntropyState>,
    rng: LabRng,
}

impl Learner<'_> {
    fn floor(&self, qed: &QedConfig, floor: &AlphaFloor) -> f64 {
        let raw = match floor {
            AlphaFloor::Fixed { alpha_min } => *alpha_min,
            AlphaFloor::TargetEntropy { .. } => self.te.expect("target-entropy floor carries state").alpha(),
        };
        raw.min(qed.alpha_max)
    }

    /// Refreshes `self.alpha` for every state from the current critics.
    fn refresh_alpha(&mut self) -> Result<()> {
        match self.config.variant {
            TemperatureVariant::FixedAlpha { alpha } => self.alpha.fill(alpha),
            TemperatureVariant::TargetEntropy { .. } => {
                let a = self.te.expect("target-entropy variant carries state").alpha();
                self.alpha.fill(a);
            }
            TemperatureVariant::Qed {
                qed,
                floor,
                disagreement,
            } => {
                let alpha_min = self.floor(&qed, &floor);
                for s in 0..self.mdp.num_states() {
                    let probs = boltzmann_policy(&self.critics.min_row(s), self.alpha[s])?;
                    let stat = match disagreement {
                        DisagreementMode::Exact => {
                            exact_categorical_disagreement(self.critics.q1.row(s), self.critics.q2.row(s), &probs, qed.tau)?
                        }
                        DisagreementMode::Sampled => {
                            let gaps: Vec<f64> = (0..qed.num_action_samples)
                                .map(|_| {
                                    let a = sample_index(&probs, &mut self.rng);
                                    (self.critics.q1.get(s, a) - self.critics.q2.get(s, a)).abs()
                                })
                                .collect();
                            crate::metrics::expectile(&gaps, qed.tau)?
                        }
                    };
                    self.alpha[s] = alpha_qed(stat, &qed, alpha_min)?;
                }
            }
        }
        Ok(())
    }

    fn policy(&self) -> Result<CategoricalPolicy> {
        let field = TemperatureField::new(self.alpha.clone(), self.alpha.iter().copied().fold(f64::INFINITY, f64::min), None)?;
        CategoricalPolicy::boltzmann(&self.critics.min_table(), &field)
    }

    fn log_row(&self, step: usize) -> Result<LogRow> {
        let init = uniform_distribution(self.mdp.num_states());
        let greedy = CategoricalPolicy::greedy(&self.critics.min_table());
        let n = self.alpha.len() as f64;
        Ok(LogRow {
            step,
            disagreement_mean: self.critics.mean_row_gap(),
            alpha_mean: self.alpha.iter().sum::<f64>() / n,
            alpha_max_state: self.alpha.iter().copied().fold(0.0, f64::max),
            return_greedy: policy_return(self.mdp, &greedy, &init)?,
            return_soft: policy_return(self.mdp, &self.policy()?, &init)?,
        })
    }

    fn update_temperature(&mut self, batch: &[Transition]) -> Result<()> {
        let Some(te) = self.te else { return Ok(()) };
        let mut log_probs = Vec::with_capacity(batch.len());
        for t in batch {
            let logp = boltzmann_log_policy(&self.critics.min_row(t.state), self.alpha[t.state])?;
            let probs: Vec<f64> = logp.iter().map(|l| l.exp()).collect();
            let a = sample_index(&probs, &mut self.rng);
            log_probs.push(logp[a]);
        }
        self.te = Some(te.update(&log_probs)?);
        Ok(())
    }
}

/// Trains one learner and records its log, final policy and evaluation states.
pub fn run_learner(mdp: &FiniteMdp, config: &LearnerConfig) -> Result<RunRecord> {
    config.validate()?;
    let mut rng = rng_from_seed(config.seed);
    let critics = DoubleCritic::random(mdp.num_states(), mdp.num_actions(), config.init_noise, &mut rng);
    let categorical_target = TargetEntropyState::categorical_target(mdp.num_actions());
    let (te, initial_alpha) = match config.variant {
        TemperatureVariant::FixedAlpha { alpha } => (None, alpha),
        TemperatureVariant::TargetEntropy {
            initial_alpha,
            step_size,
            target_entropy,
        } => (
            Some(TargetEntropyState::new(initial_alpha, target_entropy.unwrap_or(categorical_target), step_size)?),
            initial_alpha,
        ),
        TemperatureVariant::Qed { qed, floor, .. } => match floor {
            AlphaFloor::Fixed { alpha_min } => (None, alpha_min),
            AlphaFloor::TargetEntropy {
                initial_alpha,
                step_size,
            } => (
                Some(TargetEntropyState::new(initial_alpha, categorical_target, step_size)?),
                initial_alpha.min(qed.alpha_max),
            ),
        },
    };
    let mut learner = Learner {
        mdp,
        config: *config,
        critics,
        alpha: vec![initial_alpha; mdp.num_states()],
        te,
        rng,
    };
    let mut buffer = ReplayBuffer::new(config.replay_capacity)?;
    let early_steps = ((config.steps as f64 * EARLY_FRACTION).ceil() as usize).max(1);
    let mut early_sum = 0.0;

    learner.refresh_alpha()?;
    let mut log = vec![learner.log_row(0)?];
    let mut state = learner.rng.random_range(0..mdp.num_states());
    for step in 1..=config.steps {
        let behaviour = boltzmann_policy(&learner.critics.min_row(state), learner.alpha[state])?;
        let action = sample_index(&behaviour, &mut learner.rng);
        let next_state = mdp.sample_next_state(state, action, &mut learner.rng);
        buffer.push(Transition {
            state,
            action,
            reward: mdp.reward(state, action),
            next_state,
        });
        state = if step % config.episode_length == 0 {
            learner.rng.random_range(0..mdp.num_states())
        } else {
            next_state
        };

        let batch = buffer.sample(config.batch_size, &mut learner.rng)?;
        for t in &batch {
            learner
                .critics
                .soft_q_update(t, learner.alpha[t.next_state], config.learning_rate, mdp.discount())?;
        }
        learner.update_temperature(&batch)?;
        learner.refresh_alpha()?;

        if step <= early_steps {
            early_sum += learner.critics.mean_row_gap();
        }
        if step % config.log_every == 0 || step == config.steps {
            log.push(learner.log_row(step)?);
        }
    }

    let final_policy = learner.policy()?;
    let eval_states = evaluation_states(mdp, &final_policy, config)?;
    Ok(RunRecord {
        seed: config.seed,
        log,
        early_disagreement: early_sum / early_steps as f64,
        final_policy,
        final_alpha: learner.alpha,
        critics: learner.critics,
        eval_states,
    })
}

/// Seeded rollouts of `policy` from uniform start states, on an RNG stream
/// separate from training.
fn evaluation_states(mdp: &FiniteMdp, policy: &CategoricalPolicy, config: &LearnerConfig) -> Result<Vec<usize>> {
    let mut rng = LabRng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut visited = Vec::with_capacity(config.eval_episodes * config.eval_horizon);
    for _ in 0..config.eval_episodes {
        let mut s = rng.random_range(0..mdp.num_states());
        for _ in 0..config.eval_horizon {
            visited.push(s);
            let a = policy.sample_action(s, &mut rng);
            validate_pair(mdp, s, a)?;
            s = mdp.sample_next_state(s, a, &mut rng);
        }
    }
    Ok(visited)
}

/// Runs of one configuration across seeds, with their inter-run variability.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedSweep {
    pub runs: Vec<RunRecord>,
    pub variability: f64,
    /// Sorted union of evaluation states over all runs.
    pub eval_states: Vec<usize>,
    pub excluded: usize,
}

/// Runs one learner per seed (in parallel, results in seed order) and computes
/// the categorical symmetric-KL variability of their final policies.
pub fn seed_sweep(mdp: &FiniteMdp, config: &LearnerConfig, seeds: &[u64]) -> Result<SeedSweep> {
    if seeds.len() < 2 {
        return invalid(format!("a seed sweep needs at least 2 seeds, got {}", seeds.len()));
    }
    let runs = seeds
        .par_iter()
        .map(|&seed| run_learner(mdp, &LearnerConfig { seed, ..*config }))
        .collect::<Result<Vec<_>>>()?;
    let (variability, excluded, eval_states) = sweep_variability(&runs)?;
    Ok(SeedSweep {
        runs,
        variability,
        eval_states,
        excluded,
    })
}

fn sweep_variability(runs: &[RunRecord]) -> Result<(f64, usize, Vec<usize>)> {
    let mut states: Vec<usize> = runs.iter().flat_map(|r| r.eval_states.iter().copied()).collect();
    states.sort_unstable();
    states.dedup();
    let set = EvalStateSet::new(states.clone(), "evaluation rollouts of final policies")?;
    let policies: Vec<&CategoricalPolicy> = runs.iter().map(|r| &r.final_policy).collect();
    let v = inter_run_variability_detailed(&policies, &set, Divergence::CategoricalSymmetricKl)?;
    Ok((v.value, v.excluded, states))
}

/// Greedy action of a critic pair at `state` under the elementwise minimum.
pub fn greedy_action(critics: &DoubleCritic, state: usize) -> usize {
    argmax(&critics.min_row(state))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationPoint {
    pub mdp_index: usize,
    pub early_disagreement: f64,
    pub q1_dispersion: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationStudy {
    pub points: Vec<CorrelationPoint>,
    pub pearson_r: f64,
    pub r_squared: f64,
}

impl CorrelationStudy {
    pub fn from_points(points: Vec<CorrelationPoint>) -> Result<Self> {
        let x: Vec<f64> = points.iter().map(|p| p.early_disagreement).collect();
        let y: Vec<f64> = points.iter().map(|p| p.q1_dispersion).collect();
        let pearson_r = correlation(&x, &y, CorrelationKind::Pearson)?;
        Ok(Self {
            points,
            pearson_r,
            r_squared: pearson_r * pearson_r,
        })
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut csv = csv::Writer::from_writer(writer);
        for p in &self.points {
            csv.serialize(p)?;
        }
        csv.flush()?;
        Ok(())
    }
}

/// Mean absolute difference of per-seed `Q₁` means over all seed pairs.
pub fn q1_dispersion(runs: &[RunRecord]) -> Result<f64> {
    if runs.len() < 2 {
        return invalid("dispersion needs at least 2 runs");
    }
    let means: Vec<f64> = runs.iter().map(|r| r.final_q1().mean()).collect();
    let mut total = 0.0;
    for i in 0..means.len() {
        for j in i + 1..means.len() {
            total += (means[i] - means[j]).abs();
        }
    }
    Ok(total / (means.len() * (means.len() - 1) / 2) as f64)
}

/// For each MDP: mean early disagreement across seeds against the cross-seed
/// dispersion of final `Q₁` means, and their Pearson correlation over the family.
pub fn disagreement_correlation_study(mdps: &[FiniteMdp], config: &LearnerConfig, seeds: &[u64]) -> Result<CorrelationStudy> {
    if seeds.len() < 3 {
        return invalid(format!("the correlation study needs at least 3 seeds, got {}", seeds.len()));
    }
    let points = mdps
        .par_iter()
        .enumerate()
        .map(|(mdp_index, mdp)| {
            let runs = seeds
                .iter()
                .map(|&seed| run_learner(mdp, &LearnerConfig { seed, ..*config }))
                .collect::<Result<Vec<_>>>()?;
            Ok(CorrelationPoint {
                mdp_index,
                early_disagreement: runs.iter().map(|r| r.early_disagreement).sum::<f64>() / runs.len() as f64,
                q1_dispersion: q1_dispersion(&runs)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    CorrelationStudy::from_points(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{value_iteration, Backup};

    fn single_state(rewards: Vec<f64>) -> FiniteMdp {
        let na = rewards.len();
        FiniteMdp::new(1, na, 0.9, vec![rewards], vec![vec![vec![1.0]; na]]).unwrap()
    }

    #[test]
    fn update_at_fixed_point_is_stationary() {
        let mdp = single_state(vec![0.0, 0.3]);
        let temps = TemperatureField::constant(1, 0.5).unwrap();
        let q = value_iteration(&mdp, Backup::Soft(&temps), 1e-13, 100_000).unwrap().q;
        let mut critics = DoubleCritic::new(q.clone(), q.clone()).unwrap();
        for a in 0..2 {
            critics
                .soft_q_update(&Transition { state: 0, action: a, reward: mdp.reward(0, a), next_state: 0 }, 0.5, 0.7, 0.9)
                .unwrap();
        }
        assert!(critics.q1.sup_distance(&q).unwrap() < 1e-11);
    }

    #[test]
    fn hand_computed_target() {
        let q1 = QTable::from_values(2, 2, vec![0.0, 0.0, 1.0, 3.0]).unwrap();
        let q2 = QTable::from_values(2, 2, vec![0.5, 0.0, 2.0, 2.0]).unwrap();
        let mut critics = DoubleCritic::new(q1, q2).unwrap();
        let target = critics
            .soft_q_update(&Transition { state: 0, action: 0, reward: 1.0, next_state: 1 }, 1.0, 0.5, 0.9)
            .unwrap();
        // min row at state 1 is (1, 2): 1 + 0.9 ln(e + e²)
        let expected = 1.0 + 0.9 * (1f64.exp() + 2f64.exp()).ln();
        assert!((target - expected).abs() < 1e-12);
        assert!((critics.q1.get(0, 0) - 0.5 * expected).abs() < 1e-12);
        assert!((critics.q2.get(0, 0) - (0.25 + 0.5 * expected)).abs() < 1e-12);
        assert!(critics
            .soft_q_update(&Transition { state: 2, action: 0, reward: 1.0, next_state: 1 }, 1.0, 0.5, 0.9)
            .is_err());
    }

    #[test]
    fn unit_rate_converges_to_soft_fixed_point() {
        let mdp = single_state(vec![0.2, -0.1, 0.5]);
        let temps = TemperatureField::constant(1, 0.3).unwrap();
        let q = value_iteration(&mdp, Backup::Soft(&temps), 1e-13, 100_000).unwrap().q;
        let mut critics = DoubleCritic::random(1, 3, 0.1, &mut rng_from_seed(0));
        for _ in 0..400 {
            for a in 0..3 {
                critics
                    .soft_q_update(&Transition { state: 0, action: a, reward: mdp.reward(0, a), next_state: 0 }, 0.3, 1.0, 0.9)
                    .unwrap();
            }
        }
        assert!(critics.q1.sup_distance(&q).unwrap() < 1e-6);
        assert!(critics.q2.sup_distance(&q).unwrap() < 1e-6);
    }

    #[test]
    fn learner_is_deterministic() {
        let mdp = FiniteMdp::random(6, 3, 0.9, &mut rng_from_seed(5)).unwrap();
        let config = LearnerConfig {
            variant: TemperatureVariant::Qed {
                qed: QedConfig::with_k(0.2),
                floor: AlphaFloor::TargetEntropy { initial_alpha: 0.1, step_size: 0.01 },
                disagreement: DisagreementMode::Sampled,
            },
            steps: 300,
            seed: 11,
            ..LearnerConfig::default()
        };
        let a = run_learner(&mdp, &config).unwrap();
        let b = run_learner(&mdp, &config).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.log.len(), 4);
        assert_eq!(a.log.iter().map(|r| r.step).collect::<Vec<_>>(), vec![0, 100, 200, 300]);
    }

    #[test]
    fn config_validation_names_field() {
        let bad = LearnerConfig { learning_rate: 1.5, ..LearnerConfig::default() };
        assert!(bad.validate().unwrap_err().to_string().contains("learning_rate"));
        let bad = LearnerConfig {
            variant: TemperatureVariant::Qed {
                qed: QedConfig::with_k(-1.0),
                floor: AlphaFloor::Fixed { alpha_min: 0.01 },
                disagreement: DisagreementMode::Exact,
            },
            ..LearnerConfig::default()
        };
        assert!(bad.validate().unwrap_err().to_string().contains("variant.qed"));
    }

    #[test]
    fn correlation_study_degenerate_and_synthetic() {
        let same: Vec<_> = (0..4)
            .map(|i| CorrelationPoint { mdp_index: i, early_disagreement: i as f64, q1_dispersion: 0.0 })
            .collect();
        assert!(matches!(CorrelationStudy::from_points(same), Err(Error::DegenerateInput(_))));
        let tied: Vec<_> = (0..4)
            .map(|i| CorrelationPoint { mdp_index: i, early_disagreement: 0.1 * i as f64, q1_dispersion: 0.1 * i as f64 })
            .collect();
        let study = CorrelationStudy::from_points(tied).unwrap();
        assert!((study.pearson_r - 1.0).abs() < 1e-12);
    }
}
