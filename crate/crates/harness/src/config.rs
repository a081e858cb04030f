//! Experiment configuration: one TOML file per experiment, parsed strictly.
//!
//! Every table rejects unknown keys, and parse and validation errors name the
//! dotted key path of the offending entry (e.g. `tabular.ks[0]`). The block
//! matching `kind` is filled with defaults when absent; blocks for other kinds
//! are rejected.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use qedlab_core::qed::{AlphaFloor, QedConfig, DEFAULT_ALPHA_MAX, DEFAULT_NUM_ACTION_SAMPLES, DEFAULT_TAU};
use qedlab_core::tabular::{DisagreementMode, LearnerConfig, TemperatureVariant};
use qedlab_core::toy::{Activation, OptimizerKind, RewardShape, ToyAlphaMode, ToyConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{config_err, io_err, HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    VerifyThm1,
    VerifyThm2,
    Coupled,
    TabularQed,
    Toy,
    MetricsReport,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::VerifyThm1 => "verify-thm1",
            ExperimentKind::VerifyThm2 => "verify-thm2",
            ExperimentKind::Coupled => "coupled",
            ExperimentKind::TabularQed => "tabular-qed",
            ExperimentKind::Toy => "toy",
            ExperimentKind::MetricsReport => "metrics-report",
        }
    }

    fn block(self) -> &'static str {
        match self {
            ExperimentKind::VerifyThm1 => "thm1",
            ExperimentKind::VerifyThm2 => "thm2",
            ExperimentKind::Coupled => "coupled",
            ExperimentKind::TabularQed => "tabular",
            ExperimentKind::Toy => "toy",
            ExperimentKind::MetricsReport => "report",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thm1: Option<Thm1Params>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thm2: Option<Thm2Params>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupled: Option<CoupledParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tabular: Option<TabularParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub toy: Option<ToyParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<ReportParams>,
}

/// Random `(Q⁽¹⁾, Q⁽²⁾, κ)` tuples checked against the pairwise KL bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thm1Params {
    /// Tuples drawn per seed.
    pub tuples: usize,
    pub min_actions: usize,
    pub max_actions: usize,
    /// κ is log-uniform on `[kappa_min, kappa_max]`.
    pub kappa_min: f64,
    pub kappa_max: f64,
    /// `Q⁽¹⁾` entries are uniform on `[−q_scale, q_scale]`.
    pub q_scale: f64,
    pub alpha_min: f64,
    pub tolerance: f64,
}

impl Default for Thm1Params {
    fn default() -> Self {
        Self {
            tuples: 1000,
            min_actions: 2,
            max_actions: 16,
            kappa_min: 0.01,
            kappa_max: 10.0,
            q_scale: 10.0,
            alpha_min: 1e-3,
            tolerance: 1e-9,
        }
    }
}

/// Random MDPs on which the coupled iteration is checked against its error bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thm2Params {
    /// MDPs drawn per seed.
    pub mdps: usize,
    pub min_states: usize,
    pub max_states: usize,
    pub min_actions: usize,
    pub max_actions: usize,
    pub discounts: Vec<f64>,
    pub iterations: usize,
    pub kappa_min: f64,
    pub kappa_max: f64,
    pub alpha_min: f64,
    /// Initial iterates are uniform on `[0, init_scale]`.
    pub init_scale: f64,
    pub tolerance: f64,
}

impl Default for Thm2Params {
    fn default() -> Self {
        Self {
            mdps: 100,
            min_states: 2,
            max_states: 20,
            min_actions: 2,
            max_actions: 5,
            discounts: vec![0.9, 0.95],
            iterations: 200,
            kappa_min: 0.1,
            kappa_max: 10.0,
            alpha_min: 0.01,
            init_scale: 10.0,
            tolerance: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoupledInit {
    /// Both runs start from the same table, so `Δ₀ = 0`.
    Identical,
    Independent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoupledParams {
    /// MDPs drawn per seed.
    pub mdps: usize,
    pub num_states: usize,
    pub num_actions: usize,
    pub discount: f64,
    pub kappa: f64,
    pub alpha_min: f64,
    pub iterations: usize,
    pub init: CoupledInit,
    pub init_scale: f64,
    pub tolerance: f64,
}

impl Default for CoupledParams {
    fn default() -> Self {
        Self {
            mdps: 20,
            num_states: 10,
            num_actions: 4,
            discount: 0.9,
            kappa: 1.0,
            alpha_min: 0.05,
            iterations: 500,
            init: CoupledInit::Identical,
            init_scale: 10.0,
            tolerance: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TabularStudy {
    /// Inter-run variability per method over a k grid plus the fixed-floor baseline.
    #[default]
    KSweep,
    /// Early disagreement against cross-seed `Q₁` dispersion over an MDP family.
    Correlation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomFamily {
    pub count: usize,
    pub num_states: usize,
    pub num_actions: usize,
    pub discount: f64,
    /// MDP `m` is drawn from seed `base_seed + m`.
    pub base_seed: u64,
}

impl Default for RandomFamily {
    fn default() -> Self {
        Self {
            count: 5,
            num_states: 10,
            num_actions: 4,
            discount: 0.9,
            base_seed: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SparseFamily {
    pub count: usize,
    pub num_states: usize,
    pub num_actions: usize,
    pub discount: f64,
    pub base_seed: u64,
    /// MDP `m` has transition support `support_min + m mod (support_max − support_min + 1)`.
    pub support_min: usize,
    pub support_max: usize,
}

impl Default for SparseFamily {
    fn default() -> Self {
        Self {
            count: 12,
            num_states: 10,
            num_actions: 4,
            discount: 0.9,
            base_seed: 4000,
            support_min: 1,
            support_max: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainFamily {
    pub num_states: usize,
    pub num_actions: usize,
    pub discount: f64,
}

impl Default for ChainFamily {
    fn default() -> Self {
        Self {
            num_states: 6,
            num_actions: 2,
            discount: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileFamily {
    /// JSON files in the `FiniteMdp` serialisation.
    pub paths: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum MdpFamily {
    Random(RandomFamily),
    Sparse(SparseFamily),
    Chain(ChainFamily),
    File(FileFamily),
}

impl Default for MdpFamily {
    fn default() -> Self {
        MdpFamily::Random(RandomFamily::default())
    }
}

/// Expectile and clipping settings shared by every QED method of a study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QedBlock {
    pub tau: f64,
    pub num_action_samples: usize,
    pub alpha_max: f64,
}

impl Default for QedBlock {
    fn default() -> Self {
        Self {
            tau: DEFAULT_TAU,
            num_action_samples: DEFAULT_NUM_ACTION_SAMPLES,
            alpha_max: DEFAULT_ALPHA_MAX,
        }
    }
}

impl QedBlock {
    pub fn with_k(&self, k: f64, action_dim: usize) -> QedConfig {
        QedConfig {
            k,
            tau: self.tau,
            num_action_samples: self.num_action_samples,
            alpha_max: self.alpha_max,
            action_dim,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerBlock {
    pub steps: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub replay_capacity: usize,
    pub episode_length: usize,
    pub log_every: usize,
    pub init_noise: f64,
    pub eval_episodes: usize,
    pub eval_horizon: usize,
}

impl Default for LearnerBlock {
    fn default() -> Self {
        Self {
            steps: 2000,
            learning_rate: 0.01,
            batch_size: 8,
            replay_capacity: 10_000,
            episode_length: 50,
            log_every: 100,
            init_noise: 0.1,
            eval_episodes: 10,
            eval_horizon: 20,
        }
    }
}

impl LearnerBlock {
    pub fn learner(&self, variant: TemperatureVariant, seed: u64) -> LearnerConfig {
        LearnerConfig {
            variant,
            learning_rate: self.learning_rate,
            steps: self.steps,
            batch_size: self.batch_size,
            replay_capacity: self.replay_capacity,
            episode_length: self.episode_length,
            log_every: self.log_every,
            init_noise: self.init_noise,
            eval_episodes: self.eval_episodes,
            eval_horizon: self.eval_horizon,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TabularChecks {
    /// When set, each MDP is checked for `V(qed_k{direction_k}) < V(baseline)`
    /// and `spearman(k, V) > 0` over the finite k grid.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub direction_k: Option<f64>,
    /// Fraction of MDPs on which the direction must hold.
    pub direction_min_fraction: f64,
    /// Require a positive Pearson r in the correlation study.
    pub positive_correlation: bool,
}

impl Default for TabularChecks {
    fn default() -> Self {
        Self {
            direction_k: None,
            direction_min_fraction: 0.8,
            positive_correlation: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TabularParams {
    pub study: TabularStudy,
    /// Finite QED k grid; use `baseline` for `k = ∞`.
    pub ks: Vec<f64>,
    pub baseline: bool,
    pub floor: AlphaFloor,
    pub disagreement: DisagreementMode,
    /// Temperature of the correlation-study learners.
    pub correlation_temperature: TemperatureVariant,
    /// Horizon of the common-random-number rollouts behind the action distance.
    pub rollout_horizon: usize,
    pub qed: QedBlock,
    pub mdp: MdpFamily,
    pub learner: LearnerBlock,
    pub checks: TabularChecks,
}

impl Default for TabularParams {
    fn default() -> Self {
        Self {
            study: TabularStudy::KSweep,
            ks: vec![0.1, 0.2, 0.4, 0.8],
            baseline: true,
            floor: AlphaFloor::Fixed { alpha_min: 0.01 },
            disagreement: DisagreementMode::Sampled,
            correlation_temperature: TemperatureVariant::TargetEntropy {
                initial_alpha: 0.1,
                step_size: 0.01,
                target_entropy: None,
            },
            rollout_horizon: 20,
            qed: QedBlock::default(),
            mdp: MdpFamily::default(),
            learner: LearnerBlock::default(),
            checks: TabularChecks::default(),
        }
    }
}

/// Toy training settings shared by every method; the temperature and seed
/// come from the method list and the seed list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyTrainBlock {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub snapshot_every: usize,
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

impl Default for ToyTrainBlock {
    fn default() -> Self {
        let c = ToyConfig::default();
        Self {
            steps: c.steps,
            batch_size: c.batch_size,
            lr: c.lr,
            snapshot_every: c.snapshot_every,
            prefill_size: c.prefill_size,
            prefill_low: c.prefill_low,
            prefill_high: c.prefill_high,
            reward_shape: c.reward_shape,
            hidden: c.hidden,
            activation: c.activation,
            optimizer: c.optimizer,
            grad_clip: c.grad_clip,
            target_rate: c.target_rate,
            grid_points: c.grid_points,
        }
    }
}

impl ToyTrainBlock {
    pub fn toy_config(&self, alpha_mode: ToyAlphaMode, seed: u64) -> ToyConfig {
        ToyConfig {
            alpha_mode,
            steps: self.steps,
            batch_size: self.batch_size,
            lr: self.lr,
            snapshot_every: self.snapshot_every,
            seed,
            prefill_size: self.prefill_size,
            prefill_low: self.prefill_low,
            prefill_high: self.prefill_high,
            reward_shape: self.reward_shape,
            hidden: self.hidden.clone(),
            activation: self.activation,
            optimizer: self.optimizer,
            grad_clip: self.grad_clip,
            target_rate: self.target_rate,
            grid_points: self.grid_points,
        }
    }
}

/// Expected outcome for one fixed-α method: at least `min_near` seeds within
/// the tolerance of the mode and/or at least `min_far` seeds outside it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyExpectation {
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_near: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_far: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyParams {
    pub alphas: Vec<f64>,
    pub qed_ks: Vec<f64>,
    pub qed_floor: AlphaFloor,
    pub qed: QedBlock,
    pub mode_center: f64,
    pub tolerance: f64,
    pub train: ToyTrainBlock,
    pub expect: Vec<ToyExpectation>,
}

impl Default for ToyParams {
    fn default() -> Self {
        Self {
            alphas: vec![0.1, 0.15],
            qed_ks: Vec::new(),
            qed_floor: AlphaFloor::TargetEntropy {
                initial_alpha: 0.1,
                step_size: 3e-4,
            },
            qed: QedBlock::default(),
            mode_center: -2.0,
            tolerance: 0.5,
            train: ToyTrainBlock::default(),
            expect: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportParams {
    pub run_dirs: Vec<PathBuf>,
    pub bootstrap_resamples: usize,
    pub confidence: f64,
}

impl Default for ReportParams {
    fn default() -> Self {
        Self {
            run_dirs: Vec::new(),
            bootstrap_resamples: 10_000,
            confidence: 0.95,
        }
    }
}

/// Reads and validates a config file.
pub fn parse_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    parse_str(&text)
}

/// Parses and validates config text.
pub fn parse_str(text: &str) -> Result<ExperimentConfig> {
    let de = toml::Deserializer::parse(text).map_err(|e| HarnessError::Config {
        key: "<document>".into(),
        message: e.to_string(),
    })?;
    let mut config: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let key = e.path().to_string();
        HarnessError::Config {
            key: if key == "." { "<document>".into() } else { key },
            message: e.into_inner().message().trim().to_string(),
        }
    })?;
    config.validate()?;
    Ok(config)
}

impl ExperimentConfig {
    /// A config of `kind` with every parameter at its default.
    pub fn default_for(kind: ExperimentKind, seeds: Vec<u64>) -> Self {
        let mut config = Self {
            kind,
            seeds,
            out_dir: None,
            thm1: None,
            thm2: None,
            coupled: None,
            tabular: None,
            toy: None,
            report: None,
        };
        config.fill_block();
        config
    }

    fn fill_block(&mut self) {
        match self.kind {
            ExperimentKind::VerifyThm1 => _ = self.thm1.get_or_insert_with(Default::default),
            ExperimentKind::VerifyThm2 => _ = self.thm2.get_or_insert_with(Default::default),
            ExperimentKind::Coupled => _ = self.coupled.get_or_insert_with(Default::default),
            ExperimentKind::TabularQed => _ = self.tabular.get_or_insert_with(Default::default),
            ExperimentKind::Toy => _ = self.toy.get_or_insert_with(Default::default),
            ExperimentKind::MetricsReport => _ = self.report.get_or_insert_with(Default::default),
        }
    }

    /// Fills the block for `kind` with defaults and checks every value.
    pub fn validate(&mut self) -> Result<()> {
        let present = [
            ("thm1", self.thm1.is_some()),
            ("thm2", self.thm2.is_some()),
            ("coupled", self.coupled.is_some()),
            ("tabular", self.tabular.is_some()),
            ("toy", self.toy.is_some()),
            ("report", self.report.is_some()),
        ];
        for (block, is_set) in present {
            if is_set && block != self.kind.block() {
                return config_err(block, format!("block does not apply to kind `{}`", self.kind.name()));
            }
        }
        self.fill_block();
        if self.seeds.is_empty() {
            return config_err("seeds", "at least one seed is required");
        }
        let distinct: BTreeSet<u64> = self.seeds.iter().copied().collect();
        if distinct.len() != self.seeds.len() {
            return config_err("seeds", "seeds must be distinct");
        }
        if let Some(p) = &self.thm1 {
            validate_thm1(p)?;
        }
        if let Some(p) = &self.thm2 {
            validate_thm2(p)?;
        }
        if let Some(p) = &self.coupled {
            validate_coupled(p)?;
        }
        if let Some(p) = &self.tabular {
            validate_tabular(p, self.seeds.len())?;
        }
        if let Some(p) = &self.toy {
            validate_toy(p, &self.seeds)?;
        }
        if let Some(p) = &self.report {
            validate_report(p)?;
        }
        Ok(())
    }

    /// Canonical TOML form: every default populated, fixed key order.
    pub fn canonical_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Hex SHA-256 of [`Self::canonical_toml`] with `out_dir` cleared, so the
    /// same experiment written to two places hashes the same.
    pub fn config_hash(&self) -> Result<String> {
        let mut located_nowhere = self.clone();
        located_nowhere.out_dir = None;
        Ok(hex::encode(Sha256::digest(located_nowhere.canonical_toml()?.as_bytes())))
    }
}

fn positive(key: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        config_err(key, format!("must be positive and finite, got {v}"))
    }
}

fn at_least(key: &str, v: usize, min: usize) -> Result<()> {
    if v >= min {
        Ok(())
    } else {
        config_err(key, format!("must be at least {min}, got {v}"))
    }
}

fn discount(key: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        config_err(key, format!("must lie in (0, 1), got {v}"))
    }
}

fn ordered(key: &str, lo: f64, hi: f64) -> Result<()> {
    if lo <= hi {
        Ok(())
    } else {
        config_err(key, format!("lower end {lo} exceeds upper end {hi}"))
    }
}

fn validate_thm1(p: &Thm1Params) -> Result<()> {
    at_least("thm1.tuples", p.tuples, 1)?;
    at_least("thm1.min_actions", p.min_actions, 2)?;
    at_least("thm1.max_actions", p.max_actions, p.min_actions)?;
    positive("thm1.kappa_min", p.kappa_min)?;
    positive("thm1.kappa_max", p.kappa_max)?;
    ordered("thm1.kappa_max", p.kappa_min, p.kappa_max)?;
    positive("thm1.q_scale", p.q_scale)?;
    positive("thm1.alpha_min", p.alpha_min)?;
    positive("thm1.tolerance", p.tolerance)
}

fn validate_thm2(p: &Thm2Params) -> Result<()> {
    at_least("thm2.mdps", p.mdps, 1)?;
    at_least("thm2.min_states", p.min_states, 1)?;
    at_least("thm2.max_states", p.max_states, p.min_states)?;
    at_least("thm2.min_actions", p.min_actions, 1)?;
    at_least("thm2.max_actions", p.max_actions, p.min_actions)?;
    if p.discounts.is_empty() {
        return config_err("thm2.discounts", "at least one discount is required");
    }
    for (i, g) in p.discounts.iter().enumerate() {
        discount(&format!("thm2.discounts[{i}]"), *g)?;
    }
    at_least("thm2.iterations", p.iterations, 1)?;
    positive("thm2.kappa_min", p.kappa_min)?;
    positive("thm2.kappa_max", p.kappa_max)?;
    ordered("thm2.kappa_max", p.kappa_min, p.kappa_max)?;
    positive("thm2.alpha_min", p.alpha_min)?;
    positive("thm2.init_scale", p.init_scale)?;
    positive("thm2.tolerance", p.tolerance)
}

fn validate_coupled(p: &CoupledParams) -> Result<()> {
    at_least("coupled.mdps", p.mdps, 1)?;
    at_least("coupled.num_states", p.num_states, 1)?;
    at_least("coupled.num_actions", p.num_actions, 1)?;
    discount("coupled.discount", p.discount)?;
    positive("coupled.kappa", p.kappa)?;
    positive("coupled.alpha_min", p.alpha_min)?;
    at_least("coupled.iterations", p.iterations, 1)?;
    positive("coupled.init_scale", p.init_scale)?;
    positive("coupled.tolerance", p.tolerance)
}

fn validate_k_list(key: &str, ks: &[f64]) -> Result<()> {
    for (i, k) in ks.iter().enumerate() {
        if k.is_nan() || *k <= 0.0 {
            return config_err(format!("{key}[{i}]"), format!("k must be positive, got {k}"));
        }
        if k.is_infinite() {
            return config_err(format!("{key}[{i}]"), "k = inf is the baseline method; list finite k only");
        }
    }
    let distinct: BTreeSet<u64> = ks.iter().map(|k| k.to_bits()).collect();
    if distinct.len() != ks.len() {
        return config_err(key, "k values must be distinct");
    }
    Ok(())
}

fn validate_qed_block(key: &str, q: &QedBlock) -> Result<()> {
    q.with_k(1.0, 1).validate().or_else(|e| config_err(key, e.to_string()))
}

fn validate_floor(key: &str, floor: &AlphaFloor, alpha_max: f64) -> Result<()> {
    match *floor {
        AlphaFloor::Fixed { alpha_min } => {
            positive(&format!("{key}.alpha_min"), alpha_min)?;
            if alpha_min > alpha_max {
                return config_err(format!("{key}.alpha_min"), format!("exceeds alpha_max = {alpha_max}"));
            }
        }
        AlphaFloor::TargetEntropy { initial_alpha, step_size } => {
            positive(&format!("{key}.initial_alpha"), initial_alpha)?;
            positive(&format!("{key}.step_size"), step_size)?;
        }
    }
    Ok(())
}

fn validate_family(f: &MdpFamily) -> Result<()> {
    match f {
        MdpFamily::Random(r) => {
            at_least("tabular.mdp.count", r.count, 1)?;
            at_least("tabular.mdp.num_states", r.num_states, 1)?;
            at_least("tabular.mdp.num_actions", r.num_actions, 1)?;
            discount("tabular.mdp.discount", r.discount)
        }
        MdpFamily::Sparse(s) => {
            at_least("tabular.mdp.count", s.count, 1)?;
            at_least("tabular.mdp.num_states", s.num_states, 1)?;
            at_least("tabular.mdp.num_actions", s.num_actions, 1)?;
            discount("tabular.mdp.discount", s.discount)?;
            at_least("tabular.mdp.support_min", s.support_min, 1)?;
            at_least("tabular.mdp.support_max", s.support_max, s.support_min)?;
            if s.support_max > s.num_states {
                return config_err("tabular.mdp.support_max", "exceeds num_states");
            }
            Ok(())
        }
        MdpFamily::Chain(c) => {
            at_least("tabular.mdp.num_states", c.num_states, 1)?;
            at_least("tabular.mdp.num_actions", c.num_actions, 2)?;
            discount("tabular.mdp.discount", c.discount)
        }
        MdpFamily::File(f) => {
            if f.paths.is_empty() {
                return config_err("tabular.mdp.paths", "at least one MDP file is required");
            }
            Ok(())
        }
    }
}

fn validate_tabular(p: &TabularParams, num_seeds: usize) -> Result<()> {
    validate_qed_block("tabular.qed", &p.qed)?;
    validate_k_list("tabular.ks", &p.ks)?;
    validate_floor("tabular.floor", &p.floor, p.qed.alpha_max)?;
    validate_family(&p.mdp)?;
    at_least("tabular.rollout_horizon", p.rollout_horizon, 1)?;
    let learner = p.learner.learner(TemperatureVariant::FixedAlpha { alpha: 0.05 }, 0);
    learner
        .validate()
        .or_else(|e| config_err("tabular.learner", e.to_string()))?;
    match p.study {
        TabularStudy::KSweep => {
            if p.ks.is_empty() && !p.baseline {
                return config_err("tabular.ks", "a k-sweep needs at least one method");
            }
            at_least("seeds", num_seeds, 2)?;
        }
        TabularStudy::Correlation => {
            p.learner
                .learner(p.correlation_temperature, 0)
                .validate()
                .or_else(|e| config_err("tabular.correlation_temperature", e.to_string()))?;
            at_least("seeds", num_seeds, 3)?;
            let count = match &p.mdp {
                MdpFamily::Random(r) => r.count,
                MdpFamily::Sparse(s) => s.count,
                MdpFamily::Chain(_) => 1,
                MdpFamily::File(f) => f.paths.len(),
            };
            at_least("tabular.mdp.count", count, 3)?;
        }
    }
    let c = &p.checks;
    if let Some(k) = c.direction_k {
        if !p.ks.contains(&k) {
            return config_err("tabular.checks.direction_k", format!("{k} is not in tabular.ks"));
        }
        if !p.baseline {
            return config_err("tabular.checks.direction_k", "the direction check needs the baseline method");
        }
    }
    if !(c.direction_min_fraction >= 0.0 && c.direction_min_fraction <= 1.0) {
        return config_err("tabular.checks.direction_min_fraction", "must lie in [0, 1]");
    }
    Ok(())
}

fn validate_toy(p: &ToyParams, seeds: &[u64]) -> Result<()> {
    for (i, a) in p.alphas.iter().enumerate() {
        positive(&format!("toy.alphas[{i}]"), *a)?;
    }
    validate_k_list("toy.qed_ks", &p.qed_ks)?;
    if p.alphas.is_empty() && p.qed_ks.is_empty() {
        return config_err("toy.alphas", "at least one method is required");
    }
    validate_qed_block("toy.qed", &p.qed)?;
    validate_floor("toy.qed_floor", &p.qed_floor, p.qed.alpha_max)?;
    positive("toy.tolerance", p.tolerance)?;
    if !p.mode_center.is_finite() {
        return config_err("toy.mode_center", "must be finite");
    }
    p.train
        .toy_config(ToyAlphaMode::Fixed { alpha: 1.0 }, 0)
        .validate()
        .or_else(|e| config_err("toy.train", e.to_string()))?;
    for (i, e) in p.expect.iter().enumerate() {
        let key = format!("toy.expect[{i}]");
        if !p.alphas.contains(&e.alpha) {
            return config_err(format!("{key}.alpha"), format!("{} is not in toy.alphas", e.alpha));
        }
        for (name, v) in [("min_near", e.min_near), ("min_far", e.min_far)] {
            if v.is_some_and(|n| n > seeds.len()) {
                return config_err(format!("{key}.{name}"), format!("exceeds the {} seeds", seeds.len()));
            }
        }
    }
    Ok(())
}

fn validate_report(p: &ReportParams) -> Result<()> {
    at_least("report.bootstrap_resamples", p.bootstrap_resamples, 1)?;
    if !(p.confidence > 0.0 && p.confidence < 1.0) {
        return config_err("report.confidence", "must lie in (0, 1)");
    }
    Ok(())
}

/// Parses a `--seeds` value: comma-separated seeds and half-open ranges `a..b`.
pub fn parse_seed_list(text: &str) -> Result<Vec<u64>> {
    let mut seeds = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let bad = || HarnessError::Config {
            key: "--seeds".into(),
            message: format!("cannot parse `{part}`"),
        };
        if let Some((a, b)) = part.split_once("..") {
            let a: u64 = a.trim().parse().map_err(|_| bad())?;
            let b: u64 = b.trim().parse().map_err(|_| bad())?;
            if a >= b {
                return Err(bad());
            }
            seeds.extend(a..b);
        } else {
            seeds.push(part.parse().map_err(|_| bad())?);
        }
    }
    if seeds.is_empty() {
        return config_err("--seeds", "no seeds given");
    }
    Ok(seeds)
}
