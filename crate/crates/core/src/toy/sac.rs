//! Off-policy actor-critic on the bimodal bandit from a frozen, partially
//! covering replay buffer.

use std::io::Write;

use ndarray::{Array1, Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::actor::SquashedGaussianActor;
use super::env::{prefill_buffer, BimodalBanditEnv, RewardShape, ToyTransition, ACTION_HIGH, ACTION_LOW, DISCOUNT, HORIZON, STATE_DIM};
use super::mlp::{Activation, Gradients, Mlp, Optimizer, OptimizerKind};
use crate::error::{invalid, Error, Result};
use crate::qed::{alpha_qed, sample_disagreement, AlphaFloor, QedConfig, TargetEntropyState};
use crate::replay::ReplayBuffer;
use crate::tabular::LogRow;
use crate::LabRng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", deny_unknown_fields)]
pub enum ToyAlphaMode {
    Fixed { alpha: f64 },
    Qed { qed: QedConfig, floor: AlphaFloor },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToyConfig {
    pub alpha_mode: ToyAlphaMode,
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub snapshot_every: usize,
    pub seed: u64,
    pub prefill_size: usize,
    pub prefill_low: f64,
    pub prefill_high: f64,
    pub reward_shape: RewardShape,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub optimizer: OptimizerKind,
    pub grad_clip: f64,
    pub target_rate: f64,
    pub grid_points: usize,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            alpha_mode: ToyAlphaMode::Fixed { alpha: 0.1 },
            steps: 2000,
            batch_size: 256,
            lr: 3e-4,
            snapshot_every: 20,
            seed: 0,
            prefill_size: 1000,
            prefill_low: -3.0,
            prefill_high: 0.0,
            reward_shape: RewardShape::Density,
            hidden: vec![64, 64],
            activation: Activation::Tanh,
            optimizer: OptimizerKind::Adam,
            grad_clip: 20.0,
            target_rate: 0.005,
            grid_points: 512,
        }
    }
}

impl ToyConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("steps", self.steps),
            ("batch_size", self.batch_size),
            ("snapshot_every", self.snapshot_every),
            ("prefill_size", self.prefill_size),
            ("grid_points", self.grid_points),
        ] {
            if v == 0 {
                return invalid(format!("{name} must be at least 1"));
            }
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return invalid(format!("lr must be positive, got {}", self.lr));
        }
        if self.grad_clip.is_nan() || self.grad_clip <= 0.0 {
            return invalid(format!("grad_clip must be positive, got {}", self.grad_clip));
        }
        if !(self.target_rate > 0.0 && self.target_rate <= 1.0) {
            return invalid(format!("target_rate must lie in (0, 1], got {}", self.target_rate));
        }
        if !(ACTION_LOW <= self.prefill_low && self.prefill_low < self.prefill_high && self.prefill_high <= ACTION_HIGH) {
            return invalid("prefill_low and prefill_high must bound a sub-interval of the action range");
        }
        if self.hidden.contains(&0) {
            return invalid("hidden layer sizes must be positive");
        }
        match self.alpha_mode {
            ToyAlphaMode::Fixed { alpha } => {
                if !(alpha > 0.0 && alpha.is_finite()) {
                    return invalid(format!("alpha_mode.alpha must be positive, got {alpha}"));
                }
            }
            ToyAlphaMode::Qed { qed, floor } => {
                qed.validate().map_err(|e| Error::InvalidArgument(format!("alpha_mode.qed: {e}")))?;
                match floor {
                    AlphaFloor::Fixed { alpha_min } if !(alpha_min > 0.0 && alpha_min <= qed.alpha_max) => {
                        return invalid("alpha_mode.floor.alpha_min must lie in (0, alpha_max]");
                    }
                    AlphaFloor::TargetEntropy { initial_alpha, step_size } if !(initial_alpha > 0.0 && step_size > 0.0) => {
                        return invalid("alpha_mode.floor needs positive initial_alpha and step_size");
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }

    /// Midpoints of `grid_points` equal cells over the action range.
    pub fn grid(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.grid_points;
        let width = (ACTION_HIGH - ACTION_LOW) / n as f64;
        let edges = (0..=n).map(|i| ACTION_LOW + width * i as f64).collect();
        let mids = (0..n).map(|i| ACTION_LOW + width * (i as f64 + 0.5)).collect();
        (edges, mids)
    }
}

/// Critic and policy landscape on the action grid at the first timestep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Snapshot {
    pub step: usize,
    pub grid: Vec<f64>,
    pub q1: Vec<f64>,
    pub q2: Vec<f64>,
    pub density: Vec<f64>,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotRow {
    pub step: usize,
    pub grid_point: f64,
    pub q1: f64,
    pub q2: f64,
    pub q_min: f64,
    pub policy_density: f64,
    pub alpha: f64,
}

pub fn write_snapshot_csv<W: Write>(snapshots: &[Snapshot], writer: W) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    for s in snapshots {
        for i in 0..s.grid.len() {
            csv.serialize(SnapshotRow {
                step: s.step,
                grid_point: s.grid[i],
                q1: s.q1[i],
                q2: s.q2[i],
                q_min: s.q1[i].min(s.q2[i]),
                policy_density: s.density[i],
                alpha: s.alpha,
            })?;
        }
    }
    csv.flush()?;
    Ok(())
}

/// Stacks `[state features, action]` rows.
pub fn critic_inputs(states: &[[f64; STATE_DIM]], actions: &[f64]) -> Array2<f64> {
    Array2::from_shape_fn((states.len(), STATE_DIM + 1), |(i, j)| if j < STATE_DIM { states[i][j] } else { actions[i] })
}

/// `½ mean (Q − y)²` and its parameter gradient.
pub fn critic_loss_and_grad(critic: &Mlp, inputs: ArrayView2<f64>, targets: &Array1<f64>) -> Result<(f64, Gradients)> {
    let (q, cache) = critic.forward_cached(inputs)?;
    if q.ncols() != 1 || q.nrows() != targets.len() {
        return invalid("critic output does not match the target batch");
    }
    let b = targets.len() as f64;
    let diff = &q.column(0) - targets;
    let loss = 0.5 * diff.iter().map(|d| d * d).sum::<f64>() / b;
    let grad_out = (diff / b).insert_axis(ndarray::Axis(1));
    Ok((loss, critic.backward(&cache, grad_out.view())?.0))
}

/// Actor objective `mean(α log π(ã|s) − min(Q₁,Q₂)(s, ã))` under fixed
/// reparameterisation noise, its gradient, and the sampled log-probs.
pub fn actor_loss_and_grad(
    actor: &SquashedGaussianActor,
    critics: [&Mlp; 2],
    states: &[[f64; STATE_DIM]],
    noise: &[f64],
    alpha: &[f64],
) -> Result<(f64, Gradients, Vec<f64>)> {
    let n = states.len();
    if noise.len() != n || alpha.len() != n {
        return invalid("states, noise and alpha must have equal length");
    }
    let state_rows = Array2::from_shape_fn((n, STATE_DIM), |(i, j)| states[i][j]);
    let (heads, cache) = actor.heads(state_rows.view())?;
    let samples: Vec<_> = heads.iter().zip(noise).map(|(h, e)| actor.sample_with_noise(h, *e)).collect();
    let actions: Vec<f64> = samples.iter().map(|s| s.action).collect();
    let inputs = critic_inputs(states, &actions);

    let (q1, c1) = critics[0].forward_cached(inputs.view())?;
    let (q2, c2) = critics[1].forward_cached(inputs.view())?;
    let first_is_min: Vec<bool> = (0..n).map(|i| q1[[i, 0]] <= q2[[i, 0]]).collect();
    let mask1 = Array2::from_shape_fn((n, 1), |(i, _)| if first_is_min[i] { 1.0 } else { 0.0 });
    let mask2 = Array2::from_shape_fn((n, 1), |(i, _)| if first_is_min[i] { 0.0 } else { 1.0 });
    let (_, gin1) = critics[0].backward(&c1, mask1.view())?;
    let (_, gin2) = critics[1].backward(&c2, mask2.view())?;

    let b = n as f64;
    let scale = actor.scale();
    let mut loss = 0.0;
    let mut grad_mean = Array1::zeros(n);
    let mut grad_log_std = Array1::zeros(n);
    for i in 0..n {
        let q_min = q1[[i, 0]].min(q2[[i, 0]]);
        let q_a = gin1[[i, STATE_DIM]] + gin2[[i, STATE_DIM]];
        let s = &samples[i];
        loss += alpha[i] * s.log_prob - q_min;
        let t = s.pre_squash.tanh();
        let da_du = scale * (1.0 - t * t);
        let du_dlog_std = heads[i].log_std.exp() * s.noise;
        grad_mean[i] = (alpha[i] * 2.0 * t - q_a * da_du) / b;
        grad_log_std[i] = (alpha[i] * (-1.0 + 2.0 * t * du_dlog_std) - q_a * da_du * du_dlog_std) / b;
    }
    let grads = actor.backward(&heads, &cache, &grad_mean, &grad_log_std)?;
    Ok((loss / b, grads, samples.iter().map(|s| s.log_prob).collect()))
}

fn timestep_of(state: &[f64; STATE_DIM]) -> usize {
    state.iter().position(|v| *v == 1.0).unwrap_or(0)
}

#[derive(Debug, Clone)]
pub struct ToyTrainer {
    config: ToyConfig,
    env: BimodalBanditEnv,
    actor: SquashedGaussianActor,
    critics: [Mlp; 2],
    targets: [Mlp; 2],
    actor_opt: Optimizer,
    critic_opts: [Optimizer; 2],
    buffer: ReplayBuffer<ToyTransition>,
    te: Option<TargetEntropyState>,
    alpha: [f64; HORIZON],
    rng: LabRng,
    log_rng: LabRng,
    step: usize,
    edges: Vec<f64>,
    grid: Vec<f64>,
}

impl ToyTrainer {
    pub fn new(config: &ToyConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = crate::rng_from_seed(config.seed);
        let env = BimodalBanditEnv::new(config.reward_shape);
        let mut buffer = ReplayBuffer::new(config.prefill_size)?;
        prefill_buffer(&mut buffer, &env, config.prefill_size, config.prefill_low, config.prefill_high, &mut rng)?;

        let critic_sizes: Vec<usize> = std::iter::once(STATE_DIM + 1).chain(config.hidden.iter().copied()).chain([1]).collect();
        let actor = SquashedGaussianActor::new(&config.hidden, config.activation, &mut rng)?;
        let critics = [
            Mlp::new(&critic_sizes, config.activation, &mut rng)?,
            Mlp::new(&critic_sizes, config.activation, &mut rng)?,
        ];
        let targets = critics.clone();
        let clip = Some(config.grad_clip);
        let actor_opt = Optimizer::new(actor.network(), config.optimizer, config.lr, clip)?;
        let critic_opts = [
            Optimizer::new(&critics[0], config.optimizer, config.lr, clip)?,
            Optimizer::new(&critics[1], config.optimizer, config.lr, clip)?,
        ];
        let (te, alpha0) = match config.alpha_mode {
            ToyAlphaMode::Fixed { alpha } => (None, alpha),
            ToyAlphaMode::Qed { qed, floor } => match floor {
                AlphaFloor::Fixed { alpha_min } => (None, alpha_min),
                AlphaFloor::TargetEntropy { initial_alpha, step_size } => (
                    Some(TargetEntropyState::new(
                        initial_alpha,
                        TargetEntropyState::continuous_target(qed.action_dim),
                        step_size,
                    )?),
                    initial_alpha.min(qed.alpha_max),
                ),
            },
        };
        let mut log_rng = LabRng::seed_from_u64(config.seed);
        log_rng.set_stream(1);
        let (edges, grid) = config.grid();
        let mut trainer = Self {
            config: config.clone(),
            env,
            actor,
            critics,
            targets,
            actor_opt,
            critic_opts,
            buffer,
            te,
            alpha: [alpha0; HORIZON],
            rng,
            log_rng,
            step: 0,
            edges,
            grid,
        };
        trainer.refresh_alpha()?;
        Ok(trainer)
    }

    pub fn buffer(&self) -> &ReplayBuffer<ToyTransition> {
        &self.buffer
    }

    pub fn actor(&self) -> &SquashedGaussianActor {
        &self.actor
    }

    pub fn critics(&self) -> &[Mlp; 2] {
        &self.critics
    }

    pub fn target_critics(&self) -> &[Mlp; 2] {
        &self.targets
    }

    pub fn alpha(&self) -> [f64; HORIZON] {
        self.alpha
    }

    pub fn current_step(&self) -> usize {
        self.step
    }

    fn qed_disagreement(&self, qed: &QedConfig, t: usize, rng: &mut LabRng) -> Result<f64> {
        let [c1, c2] = &self.critics;
        let q1 = |s: &[f64; STATE_DIM], a: &f64| -> Result<f64> { Ok(c1.forward_one(&[s[0], s[1], *a])?[0]) };
        let q2 = |s: &[f64; STATE_DIM], a: &f64| -> Result<f64> { Ok(c2.forward_one(&[s[0], s[1], *a])?[0]) };
        sample_disagreement(&q1, &q2, &BimodalBanditEnv::features(t), &self.actor, qed, rng)
    }

    fn refresh_alpha(&mut self) -> Result<()> {
        match self.config.alpha_mode {
            ToyAlphaMode::Fixed { alpha } => self.alpha = [alpha; HORIZON],
            ToyAlphaMode::Qed { qed, floor } => {
                let alpha_min = match floor {
                    AlphaFloor::Fixed { alpha_min } => alpha_min,
                    AlphaFloor::TargetEntropy { .. } => self.te.expect("target-entropy floor carries state").alpha(),
                }
                .min(qed.alpha_max);
                let mut rng = self.rng.clone();
                for t in 0..HORIZON {
                    let d = self.qed_disagreement(&qed, t, &mut rng)?;
                    self.alpha[t] = alpha_qed(d, &qed, alpha_min)?;
                }
                self.rng = rng;
            }
        }
        Ok(())
    }

    /// One critic, actor, temperature and target update on a replay batch.
    pub fn step(&mut self) -> Result<()> {
        let batch = self.buffer.sample(self.config.batch_size, &mut self.rng)?;
        let n = batch.len();

        let next_states: Vec<[f64; STATE_DIM]> = batch.iter().map(|t| t.next_state).collect();
        let next_rows = Array2::from_shape_fn((n, STATE_DIM), |(i, j)| next_states[i][j]);
        let (next_heads, _) = self.actor.heads(next_rows.view())?;
        let next_samples: Vec<_> = next_heads.iter().map(|h| self.actor.sample(h, &mut self.rng)).collect();
        let next_inputs = critic_inputs(&next_states, &next_samples.iter().map(|s| s.action).collect::<Vec<_>>());
        let tq1 = self.targets[0].forward(next_inputs.view())?;
        let tq2 = self.targets[1].forward(next_inputs.view())?;
        let targets = Array1::from_shape_fn(n, |i| {
            let t = &batch[i];
            if t.done {
                t.reward
            } else {
                let soft = tq1[[i, 0]].min(tq2[[i, 0]]) - self.alpha[timestep_of(&t.next_state)] * next_samples[i].log_prob;
                t.reward + DISCOUNT * soft
            }
        });

        let states: Vec<[f64; STATE_DIM]> = batch.iter().map(|t| t.state).collect();
        let inputs = critic_inputs(&states, &batch.iter().map(|t| t.action).collect::<Vec<_>>());
        for i in 0..2 {
            let (_, grads) = critic_loss_and_grad(&self.critics[i], inputs.view(), &targets)?;
            self.critic_opts[i].step(&mut self.critics[i], grads);
        }

        let noise: Vec<f64> = (0..n).map(|_| self.rng.sample(StandardNormal)).collect();
        let alpha: Vec<f64> = states.iter().map(|s| self.alpha[timestep_of(s)]).collect();
        let (_, grads, log_probs) = actor_loss_and_grad(&self.actor, [&self.critics[0], &self.critics[1]], &states, &noise, &alpha)?;
        self.actor_opt.step(self.actor.network_mut(), grads);

        if let Some(te) = self.te {
            self.te = Some(te.update(&log_probs)?);
        }
        for i in 0..2 {
            self.targets[i].soft_update(&self.critics[i], self.config.target_rate);
        }
        self.step += 1;
        self.refresh_alpha()
    }

    pub fn snapshot(&self) -> Result<Snapshot> {
        let state = BimodalBanditEnv::features(0);
        let states = vec![state; self.grid.len()];
        let inputs = critic_inputs(&states, &self.grid);
        let q1 = self.critics[0].forward(inputs.view())?.column(0).to_vec();
        let q2 = self.critics[1].forward(inputs.view())?.column(0).to_vec();
        Ok(Snapshot {
            step: self.step,
            grid: self.grid.clone(),
            q1,
            q2,
            density: self.actor.cell_density(&state, &self.edges)?,
            alpha: self.alpha[0],
        })
    }

    fn clamped_reward(&self, a: f64) -> Result<f64> {
        self.env.reward(a.clamp(ACTION_LOW.next_up(), ACTION_HIGH.next_down()))
    }

    fn log_row(&mut self) -> Result<LogRow> {
        let qed = match self.config.alpha_mode {
            ToyAlphaMode::Qed { qed, .. } => qed,
            ToyAlphaMode::Fixed { .. } => QedConfig::default(),
        };
        let mut rng = self.log_rng.clone();
        let mut disagreement = 0.0;
        let mut return_greedy = 0.0;
        let mut return_soft = 0.0;
        for t in 0..HORIZON {
            let state = BimodalBanditEnv::features(t);
            disagreement += self.qed_disagreement(&qed, t, &mut rng)? / HORIZON as f64;
            let discount = DISCOUNT.powi(t as i32);
            return_greedy += discount * self.clamped_reward(self.actor.deterministic_action(&state)?)?;
            let expected = self.actor.expectation(&state, |a| self.clamped_reward(a))?;
            return_soft += discount * expected;
        }
        self.log_rng = rng;
        Ok(LogRow {
            step: self.step,
            disagreement_mean: disagreement,
            alpha_mean: self.alpha.iter().sum::<f64>() / HORIZON as f64,
            alpha_max_state: self.alpha.iter().copied().fold(0.0, f64::max),
            return_greedy,
            return_soft,
        })
    }
}

/// Outcome of one toy training run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToyRun {
    pub seed: u64,
    pub snapshots: Vec<Snapshot>,
    pub log: Vec<LogRow>,
    /// Mean of the squashed action distribution at the first timestep.
    pub final_mean_action: f64,
    pub final_alpha: [f64; HORIZON],
    #[serde(skip)]
    pub actor: SquashedGaussianActor,
}

impl ToyRun {
    /// Whether the final mean lies within `tolerance` of `mode`.
    pub fn near_mode(&self, mode: f64, tolerance: f64) -> bool {
        (self.final_mean_action - mode).abs() <= tolerance
    }

    /// Deterministic actions at each timestep, for action-distance metrics.
    pub fn greedy_rollout(&self) -> Result<Vec<Vec<f64>>> {
        (0..HORIZON)
            .map(|t| Ok(vec![self.actor.deterministic_action(&BimodalBanditEnv::features(t))?]))
            .collect()
    }
}

/// Trains from the prefilled buffer, snapshotting at step 0 and every
/// `snapshot_every` steps (and at the last step).
pub fn train_toy(config: &ToyConfig) -> Result<ToyRun> {
    let mut trainer = ToyTrainer::new(config)?;
    let mut snapshots = vec![trainer.snapshot()?];
    let mut log = vec![trainer.log_row()?];
    for step in 1..=config.steps {
        trainer.step()?;
        if step % config.snapshot_every == 0 || step == config.steps {
            snapshots.push(trainer.snapshot()?);
            log.push(trainer.log_row()?);
        }
    }
    Ok(ToyRun {
        seed: config.seed,
        snapshots,
        log,
        final_mean_action: trainer.actor.mean_action(&BimodalBanditEnv::features(0))?,
        final_alpha: trainer.alpha,
        actor: trainer.actor,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> ToyConfig {
        ToyConfig {
            steps: 6,
            batch_size: 16,
            snapshot_every: 3,
            prefill_size: 40,
            hidden: vec![8, 8],
            grid_points: 32,
            ..ToyConfig::default()
        }
    }

    #[test]
    fn buffer_is_frozen_and_runs_repeat() {
        let cfg = quick();
        let mut trainer = ToyTrainer::new(&cfg).unwrap();
        let before: Vec<ToyTransition> = trainer.buffer().iter().copied().collect();
        for _ in 0..cfg.steps {
            trainer.step().unwrap();
        }
        let after: Vec<ToyTransition> = trainer.buffer().iter().copied().collect();
        assert_eq!(before, after);
        assert_eq!(trainer.buffer().insertions(), cfg.prefill_size as u64);
        assert_eq!(train_toy(&cfg).unwrap(), train_toy(&cfg).unwrap());
    }

    #[test]
    fn snapshots_share_grid_and_normalise() {
        let run = train_toy(&quick()).unwrap();
        assert_eq!(run.snapshots.iter().map(|s| s.step).collect::<Vec<_>>(), vec![0, 3, 6]);
        assert_eq!(run.log.len(), 3);
        let width = 10.0 / 32.0;
        for s in &run.snapshots {
            assert_eq!(s.grid, run.snapshots[0].grid);
            let mass: f64 = s.density.iter().map(|d| d * width).sum();
            assert!((mass - 1.0).abs() < 1e-3);
        }
        let mut buf = Vec::new();
        write_snapshot_csv(&run.snapshots, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "step,grid_point,q1,q2,q_min,policy_density,alpha");
        assert_eq!(text.lines().count(), 1 + 3 * 32);
    }

    #[test]
    fn qed_mode_stays_within_bounds() {
        let cfg = ToyConfig {
            alpha_mode: ToyAlphaMode::Qed {
                qed: QedConfig::with_k(0.2),
                floor: AlphaFloor::TargetEntropy { initial_alpha: 0.1, step_size: 0.01 },
            },
            ..quick()
        };
        let run = train_toy(&cfg).unwrap();
        for row in &run.log {
            assert!(row.alpha_max_state <= 0.2 + 1e-15);
            assert!(row.alpha_mean > 0.0);
        }
    }

    #[test]
    fn target_networks_start_synced() {
        let trainer = ToyTrainer::new(&quick()).unwrap();
        assert_eq!(trainer.target_critics(), trainer.critics());
    }
}
