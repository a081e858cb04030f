//! Finite MDPs, Boltzmann policies and hard/soft Bellman backups.
//!
//! Tensors are dense and row-major: `reward[s * A + a]` and
//! `transition[(s * A + a) * S + s']`. Every softmax and log-sum-exp goes
//! through max-subtraction so that temperatures near the floor do not
//! overflow.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Tolerance on probability rows summing to one.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Default sup-norm stopping tolerance for [`value_iteration`].
pub const DEFAULT_VI_TOL: f64 = 1e-10;

/// Default iteration cap for [`value_iteration`].
pub const DEFAULT_VI_MAX_ITERS: usize = 100_000;

fn check_distribution(row: &[f64], what: &str) -> Result<()> {
    if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return invalid(format!("{what} has a negative or non-finite entry"));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > ROW_SUM_TOL {
        return invalid(format!("{what} sums to {sum}, expected 1"));
    }
    Ok(())
}

/// A finite MDP `(S, A, P, r, γ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MdpDocument", into = "MdpDocument")]
pub struct FiniteMdp {
    num_states: usize,
    num_actions: usize,
    discount: f64,
    reward: Vec<f64>,
    transition: Vec<f64>,
}

/// On-disk JSON layout, `transition` indexed `[s][a][s']`.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MdpDocument {
    num_states: usize,
    num_actions: usize,
    discount: f64,
    reward: Vec<Vec<f64>>,
    transition: Vec<Vec<Vec<f64>>>,
}

impl TryFrom<MdpDocument> for FiniteMdp {
    type Error = Error;

    fn try_from(doc: MdpDocument) -> Result<Self> {
        FiniteMdp::new(doc.num_states, doc.num_actions, doc.discount, doc.reward, doc.transition)
    }
}

impl From<FiniteMdp> for MdpDocument {
    fn from(mdp: FiniteMdp) -> Self {
        let (s_n, a_n) = (mdp.num_states, mdp.num_actions);
        let reward = (0..s_n).map(|s| mdp.reward[s * a_n..(s + 1) * a_n].to_vec()).collect();
        let transition = (0..s_n)
            .map(|s| (0..a_n).map(|a| mdp.transition_row(s, a).to_vec()).collect())
            .collect();
        MdpDocument {
            num_states: s_n,
            num_actions: a_n,
            discount: mdp.discount,
            reward,
            transition,
        }
    }
}

impl FiniteMdp {
    /// Builds an MDP from nested `reward[s][a]` and `transition[s][a][s']`.
    pub fn new(
        num_states: usize,
        num_actions: usize,
        discount: f64,
        reward: Vec<Vec<f64>>,
        transition: Vec<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        if reward.len() != num_states || reward.iter().any(|r| r.len() != num_actions) {
            return invalid(format!("reward must have shape [{num_states}][{num_actions}]"));
        }
        if transition.len() != num_states
            || transition
                .iter()
                .any(|t| t.len() != num_actions || t.iter().any(|row| row.len() != num_states))
        {
            return invalid(format!(
                "transition must have shape [{num_states}][{num_actions}][{num_states}]"
            ));
        }
        let reward = reward.into_iter().flatten().collect();
        let transition = transition.into_iter().flatten().flatten().collect();
        Self::from_flat(num_states, num_actions, discount, reward, transition)
    }

    /// Builds an MDP from row-major flat tensors, validating every invariant.
    pub fn from_flat(
        num_states: usize,
        num_actions: usize,
        discount: f64,
        reward: Vec<f64>,
        transition: Vec<f64>,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 {
            return invalid("an MDP needs at least one state and one action");
        }
        if !(discount > 0.0 && discount < 1.0) {
            return invalid(format!("discount must lie strictly inside (0, 1), got {discount}"));
        }
        if reward.len() != num_states * num_actions {
            return invalid("reward length does not match num_states * num_actions");
        }
        if transition.len() != num_states * num_actions * num_states {
            return invalid("transition length does not match num_states^2 * num_actions");
        }
        if let Some(i) = reward.iter().position(|r| !r.is_finite()) {
            return invalid(format!(
                "reward[{}][{}] is not finite",
                i / num_actions,
                i % num_actions
            ));
        }
        for (i, row) in transition.chunks(num_states).enumerate() {
            check_distribution(
                row,
                &format!("transition[{}][{}]", i / num_actions, i % num_actions),
            )?;
        }
        Ok(Self {
            num_states,
            num_actions,
            discount,
            reward,
            transition,
        })
    }

    /// Random MDP with Dirichlet(1, …, 1) transition rows and rewards uniform in `[0, 1]`.
    pub fn random<R: Rng + ?Sized>(
        num_states: usize,
        num_actions: usize,
        discount: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let reward = (0..num_states * num_actions).map(|_| rng.random::<f64>()).collect();
        let mut transition = Vec::with_capacity(num_states * num_actions * num_states);
        for _ in 0..num_states * num_actions {
            let draws: Vec<f64> = (0..num_states).map(|_| rng.sample::<f64, _>(Exp1)).collect();
            let total: f64 = draws.iter().sum();
            transition.extend(draws.iter().map(|d| d / total));
        }
        Self::from_flat(num_states, num_actions, discount, reward, transition)
    }

    /// Like [`FiniteMdp::random`], but each transition row puts its Dirichlet(1)
    /// mass on `support` distinct next states chosen uniformly.
    pub fn random_sparse<R: Rng + ?Sized>(
        num_states: usize,
        num_actions: usize,
        support: usize,
        discount: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if support == 0 || support > num_states {
            return invalid(format!("support must lie in 1..={num_states}, got {support}"));
        }
        let reward = (0..num_states * num_actions).map(|_| rng.random::<f64>()).collect();
        let mut transition = vec![0.0; num_states * num_actions * num_states];
        for row in transition.chunks_mut(num_states) {
            let targets = rand::seq::index::sample(rng, num_states, support);
            let draws: Vec<f64> = (0..support).map(|_| rng.sample::<f64, _>(Exp1)).collect();
            let total: f64 = draws.iter().sum();
            for (s, d) in targets.iter().zip(&draws) {
                row[s] = d / total;
            }
        }
        Self::from_flat(num_states, num_actions, discount, reward, transition)
    }

    /// Deterministic chain: action 0 steps left, any other action steps right,
    /// and every action taken in the last state pays `1` and stays there.
    pub fn chain(num_states: usize, num_actions: usize, discount: f64) -> Result<Self> {
        if num_actions < 2 {
            return invalid("a chain needs at least two actions");
        }
        let last = num_states.saturating_sub(1);
        let mut reward = vec![0.0; num_states * num_actions];
        let mut transition = vec![0.0; num_states * num_actions * num_states];
        for s in 0..num_states {
            for a in 0..num_actions {
                let next = if s == last {
                    last
                } else if a == 0 {
                    s.saturating_sub(1)
                } else {
                    s + 1
                };
                if s == last {
                    reward[s * num_actions + a] = 1.0;
                }
                transition[(s * num_actions + a) * num_states + next] = 1.0;
            }
        }
        Self::from_flat(num_states, num_actions, discount, reward, transition)
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn reward(&self, state: usize, action: usize) -> f64 {
        self.reward[state * self.num_actions + action]
    }

    pub fn transition_row(&self, state: usize, action: usize) -> &[f64] {
        let start = (state * self.num_actions + action) * self.num_states;
        &self.transition[start..start + self.num_states]
    }

    /// Draws `s' ~ P(· | s, a)`.
    pub fn sample_next_state<R: Rng + ?Sized>(&self, state: usize, action: usize, rng: &mut R) -> usize {
        sample_index(self.transition_row(state, action), rng)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    fn check_index(&self, state: usize, action: usize) -> Result<()> {
        if state >= self.num_states || action >= self.num_actions {
            return invalid(format!(
                "index ({state}, {action}) out of range for {}x{} MDP",
                self.num_states, self.num_actions
            ));
        }
        Ok(())
    }

    /// `r(s,a) + γ Σ_{s'} P(s'|s,a) v(s')` for every pair.
    fn backup(&self, next_values: &[f64]) -> QTable {
        let mut values = Vec::with_capacity(self.num_states * self.num_actions);
        for s in 0..self.num_states {
            for a in 0..self.num_actions {
                let expected: f64 = self
                    .transition_row(s, a)
                    .iter()
                    .zip(next_values)
                    .map(|(p, v)| p * v)
                    .sum();
                values.push(self.reward(s, a) + self.discount * expected);
            }
        }
        QTable {
            num_states: self.num_states,
            num_actions: self.num_actions,
            values,
        }
    }
}

/// Inverse-CDF draw from a probability vector.
pub(crate) fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Rounding left `acc` a hair below one; fall back to the last supported entry.
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(probs.len() - 1)
}

/// Dense action-value table indexed `(state, action)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    num_states: usize,
    num_actions: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn zeros(num_states: usize, num_actions: usize) -> Self {
        Self {
            num_states,
            num_actions,
            values: vec![0.0; num_states * num_actions],
        }
    }

    pub fn for_mdp(mdp: &FiniteMdp) -> Self {
        Self::zeros(mdp.num_states, mdp.num_actions)
    }

    pub fn from_values(num_states: usize, num_actions: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != num_states * num_actions {
            return invalid(format!(
                "expected {} values for a {num_states}x{num_actions} table, got {}",
                num_states * num_actions,
                values.len()
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return invalid("Q-table entries must be finite");
        }
        Ok(Self {
            num_states,
            num_actions,
            values,
        })
    }

    pub fn from_fn(num_states: usize, num_actions: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(num_states * num_actions);
        for s in 0..num_states {
            for a in 0..num_actions {
                values.push(f(s, a));
            }
        }
        Self {
            num_states,
            num_actions,
            values,
        }
    }

    /// Entries drawn independently and uniformly from `[low, high)`.
    pub fn random_uniform<R: Rng + ?Sized>(
        num_states: usize,
        num_actions: usize,
        low: f64,
        high: f64,
        rng: &mut R,
    ) -> Self {
        Self::from_fn(num_states, num_actions, |_, _| low + (high - low) * rng.random::<f64>())
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, state: usize) -> &[f64] {
        &self.values[state * self.num_actions..(state + 1) * self.num_actions]
    }

    pub fn row_mut(&mut self, state: usize) -> &mut [f64] {
        &mut self.values[state * self.num_actions..(state + 1) * self.num_actions]
    }

    pub fn get(&self, state: usize, action: usize) -> f64 {
        self.values[state * self.num_actions + action]
    }

    pub fn set(&mut self, state: usize, action: usize, value: f64) {
        self.values[state * self.num_actions + action] = value;
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn same_shape(&self, other: &QTable) -> bool {
        self.num_states == other.num_states && self.num_actions == other.num_actions
    }

    pub fn check_mdp(&self, mdp: &FiniteMdp) -> Result<()> {
        if self.num_states != mdp.num_states || self.num_actions != mdp.num_actions {
            return invalid(format!(
                "Q-table shape {}x{} does not match MDP {}x{}",
                self.num_states, self.num_actions, mdp.num_states, mdp.num_actions
            ));
        }
        Ok(())
    }

    /// `‖self − other‖∞`.
    pub fn sup_distance(&self, other: &QTable) -> Result<f64> {
        if !self.same_shape(other) {
            return invalid("Q-tables have different shapes");
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| f64::max(m, (a - b).abs())))
    }

    /// Per-state `‖Q₁(s,·) − Q₂(s,·)‖∞`.
    pub fn row_sup_distances(&self, other: &QTable) -> Result<Vec<f64>> {
        if !self.same_shape(other) {
            return invalid("Q-tables have different shapes");
        }
        Ok((0..self.num_states)
            .map(|s| row_sup_distance(self.row(s), other.row(s)))
            .collect())
    }
}

pub(crate) fn row_sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| f64::max(m, (x - y).abs()))
}

/// Row-stochastic policy `π(a | s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolicyDocument", into = "PolicyDocument")]
pub struct CategoricalPolicy {
    num_states: usize,
    num_actions: usize,
    probs: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolicyDocument {
    probs: Vec<Vec<f64>>,
}

impl TryFrom<PolicyDocument> for CategoricalPolicy {
    type Error = Error;

    fn try_from(doc: PolicyDocument) -> Result<Self> {
        CategoricalPolicy::from_rows(doc.probs)
    }
}

impl From<CategoricalPolicy> for PolicyDocument {
    fn from(policy: CategoricalPolicy) -> Self {
        PolicyDocument {
            probs: (0..policy.num_states).map(|s| policy.row(s).to_vec()).collect(),
        }
    }
}

impl CategoricalPolicy {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let num_states = rows.len();
        let num_actions = rows.first().map_or(0, Vec::len);
        if num_states == 0 || num_actions == 0 {
            return invalid("a policy needs at least one state and one action");
        }
        if rows.iter().any(|r| r.len() != num_actions) {
            return invalid("policy rows have different lengths");
        }
        for (s, row) in rows.iter().enumerate() {
            check_distribution(row, &format!("policy row {s}"))?;
        }
        Ok(Self {
            num_states,
            num_actions,
            probs: rows.into_iter().flatten().collect(),
        })
    }

    pub fn uniform(num_states: usize, num_actions: usize) -> Self {
        Self {
            num_states,
            num_actions,
            probs: vec![1.0 / num_actions as f64; num_states * num_actions],
        }
    }

    /// Boltzmann policy of `q` at the per-state temperatures of `temps`.
    pub fn boltzmann(q: &QTable, temps: &TemperatureField) -> Result<Self> {
        if temps.len() != q.num_states {
            return invalid("temperature field length does not match the Q-table");
        }
        let mut probs = Vec::with_capacity(q.values.len());
        for s in 0..q.num_states {
            probs.extend(boltzmann_policy(q.row(s), temps.get(s))?);
        }
        Ok(Self {
            num_states: q.num_states,
            num_actions: q.num_actions,
            probs,
        })
    }

    /// Deterministic policy on the first maximising action of every row.
    pub fn greedy(q: &QTable) -> Self {
        let mut probs = vec![0.0; q.values.len()];
        for s in 0..q.num_states {
            probs[s * q.num_actions + argmax(q.row(s))] = 1.0;
        }
        Self {
            num_states: q.num_states,
            num_actions: q.num_actions,
            probs,
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn row(&self, state: usize) -> &[f64] {
        &self.probs[state * self.num_actions..(state + 1) * self.num_actions]
    }

    pub fn sample_action<R: Rng + ?Sized>(&self, state: usize, rng: &mut R) -> usize {
        sample_index(self.row(state), rng)
    }
}

pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

/// Per-state temperature `α(s)` with its floor and optional ceiling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemperatureField {
    alpha: Vec<f64>,
    alpha_min: f64,
    alpha_max: Option<f64>,
    /// Disagreement scale the field was derived from, when it was.
    kappa: Option<f64>,
}

impl TemperatureField {
    pub fn new(alpha: Vec<f64>, alpha_min: f64, alpha_max: Option<f64>) -> Result<Self> {
        if !(alpha_min > 0.0 && alpha_min.is_finite()) {
            return invalid(format!("alpha_min must be positive and finite, got {alpha_min}"));
        }
        if let Some(ceiling) = alpha_max {
            if ceiling.is_nan() || ceiling <= alpha_min {
                return invalid(format!("alpha_max ({ceiling}) must exceed alpha_min ({alpha_min})"));
            }
        }
        if alpha.is_empty() {
            return invalid("temperature field is empty");
        }
        for (s, a) in alpha.iter().enumerate() {
            if !a.is_finite() || *a < alpha_min || alpha_max.is_some_and(|m| *a > m) {
                return invalid(format!("alpha({s}) = {a} violates the temperature bounds"));
            }
        }
        Ok(Self {
            alpha,
            alpha_min,
            alpha_max,
            kappa: None,
        })
    }

    /// The same temperature in every state; the floor is the value itself.
    pub fn constant(num_states: usize, alpha: f64) -> Result<Self> {
        Self::new(vec![alpha; num_states], alpha, None)
    }

    pub fn with_kappa(mut self, kappa: f64) -> Self {
        self.kappa = Some(kappa);
        self
    }

    pub fn get(&self, state: usize) -> f64 {
        self.alpha[state]
    }

    pub fn values(&self) -> &[f64] {
        &self.alpha
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    pub fn alpha_min(&self) -> f64 {
        self.alpha_min
    }

    pub fn alpha_max(&self) -> Option<f64> {
        self.alpha_max
    }

    pub fn kappa(&self) -> Option<f64> {
        self.kappa
    }

    pub fn max_alpha(&self) -> f64 {
        self.alpha.iter().copied().fold(f64::MIN, f64::max)
    }
}

/// `log Σ exp(x)` with max-subtraction.
pub fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `α · log Σ_a exp(q(a)/α)`, the soft maximum of a row.
pub fn soft_value(q_row: &[f64], alpha: f64) -> f64 {
    let m = q_row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + alpha * q_row.iter().map(|q| ((q - m) / alpha).exp()).sum::<f64>().ln()
}

/// `softmax(q_row / α)`.
pub fn boltzmann_policy(q_row: &[f64], alpha: f64) -> Result<Vec<f64>> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return invalid(format!("temperature must be positive and finite, got {alpha}"));
    }
    if q_row.is_empty() || q_row.iter().any(|q| !q.is_finite()) {
        return invalid("action values must be finite and non-empty");
    }
    let m = q_row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = q_row.iter().map(|q| ((q - m) / alpha).exp()).collect();
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= total);
    Ok(probs)
}

/// Log-probabilities of `softmax(q_row / α)`, exact even where the probability underflows.
pub fn boltzmann_log_policy(q_row: &[f64], alpha: f64) -> Result<Vec<f64>> {
    boltzmann_policy(q_row, alpha)?;
    let scaled: Vec<f64> = q_row.iter().map(|q| q / alpha).collect();
    let lse = logsumexp(&scaled);
    Ok(scaled.iter().map(|x| x - lse).collect())
}

/// Unregularised Bellman optimality backup `(T Q)(s,a) = r + γ E[max_a' Q(s',a')]`.
pub fn hard_bellman(mdp: &FiniteMdp, q: &QTable) -> Result<QTable> {
    q.check_mdp(mdp)?;
    let next: Vec<f64> = (0..mdp.num_states)
        .map(|s| q.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    Ok(mdp.backup(&next))
}

/// Soft backup `(T_α Q)(s,a) = r + γ E[α(s') log Σ_a' exp(Q(s',a')/α(s'))]`.
pub fn soft_bellman(mdp: &FiniteMdp, q: &QTable, temps: &TemperatureField) -> Result<QTable> {
    q.check_mdp(mdp)?;
    if temps.len() != mdp.num_states {
        return invalid("temperature field length does not match the MDP");
    }
    if let Some(s) = temps.values().iter().position(|a| a.is_nan() || *a <= 0.0) {
        return invalid(format!("temperature at state {s} is not positive"));
    }
    let next: Vec<f64> = (0..mdp.num_states)
        .map(|s| soft_value(q.row(s), temps.get(s)))
        .collect();
    Ok(mdp.backup(&next))
}

/// Which backup [`value_iteration`] applies.
#[derive(Debug, Clone, Copy)]
pub enum Backup<'a> {
    Hard,
    Soft(&'a TemperatureField),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StopReason {
    Converged,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct ValueIteration {
    pub q: QTable,
    pub iterations: usize,
    /// Sup-norm change of the last sweep.
    pub residual: f64,
    pub stop: StopReason,
}

/// Iterates the chosen backup from `Q ≡ 0` until the sup-norm change drops below `tol`.
pub fn value_iteration(mdp: &FiniteMdp, backup: Backup<'_>, tol: f64, max_iters: usize) -> Result<ValueIteration> {
    if tol.is_nan() || tol <= 0.0 {
        return invalid(format!("tolerance must be positive, got {tol}"));
    }
    let mut q = QTable::for_mdp(mdp);
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iters {
        let next = match backup {
            Backup::Hard => hard_bellman(mdp, &q)?,
            Backup::Soft(temps) => soft_bellman(mdp, &q, temps)?,
        };
        residual = next.sup_distance(&q)?;
        q = next;
        iterations += 1;
        if residual < tol {
            return Ok(ValueIteration {
                q,
                iterations,
                residual,
                stop: StopReason::Converged,
            });
        }
    }
    Ok(ValueIteration {
        q,
        iterations,
        residual,
        stop: StopReason::MaxIterations,
    })
}

/// Exact state values `V^π = (I − γ P_π)⁻¹ r_π`.
pub fn evaluate_policy(mdp: &FiniteMdp, policy: &CategoricalPolicy) -> Result<Vec<f64>> {
    let n = mdp.num_states;
    if policy.num_states != n || policy.num_actions != mdp.num_actions {
        return invalid("policy shape does not match the MDP");
    }
    let mut system = DMatrix::<f64>::identity(n, n);
    let mut rhs = DVector::<f64>::zeros(n);
    for s in 0..n {
        for (a, p) in policy.row(s).iter().enumerate() {
            if *p == 0.0 {
                continue;
            }
            rhs[s] += p * mdp.reward(s, a);
            for (next, t) in mdp.transition_row(s, a).iter().enumerate() {
                system[(s, next)] -= mdp.discount * p * t;
            }
        }
    }
    let solution = system
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Internal("policy evaluation system is singular".into()))?;
    Ok(solution.iter().copied().collect())
}

/// Expected discounted return `J(π) = Σ_s d₀(s) V^π(s)`.
pub fn policy_return(mdp: &FiniteMdp, policy: &CategoricalPolicy, initial_dist: &[f64]) -> Result<f64> {
    if initial_dist.len() != mdp.num_states {
        return invalid("initial distribution length does not match the MDP");
    }
    check_distribution(initial_dist, "initial distribution")?;
    let values = evaluate_policy(mdp, policy)?;
    Ok(initial_dist.iter().zip(&values).map(|(d, v)| d * v).sum())
}

pub fn uniform_distribution(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

pub(crate) fn validate_pair(mdp: &FiniteMdp, state: usize, action: usize) -> Result<()> {
    mdp.check_index(state, action)
}
