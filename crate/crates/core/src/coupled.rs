//! Disagreement-scaled shared temperature and the coupled soft iteration.
//!
//! Two Q-iterates are advanced by the same soft backup whose per-state
//! temperature is `α_t(s) = max(α_min, ‖Q⁽¹⁾_t(s,·) − Q⁽²⁾_t(s,·)‖∞ / κ)`.
//! At that temperature the Boltzmann policies of the two iterates stay within
//! `2κ` in KL (both directions and symmetrised), the disagreement contracts by
//! `γ` per step, and each iterate's distance to the hard optimum obeys
//! [`error_bound`].

use std::io::Write;

use serde::Serialize;

use crate::error::{invalid, Result};
use crate::mdp::{
    boltzmann_log_policy, soft_bellman, value_iteration, Backup, FiniteMdp, QTable, TemperatureField,
    DEFAULT_VI_MAX_ITERS,
};

/// Value-iteration tolerance for the hard optimum used as the bound oracle.
pub const Q_STAR_TOL: f64 = 1e-12;

/// Parameters of the disagreement-scaled temperature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Coupling {
    pub kappa: f64,
    pub alpha_min: f64,
}

impl Coupling {
    pub fn new(kappa: f64, alpha_min: f64) -> Result<Self> {
        if !(kappa > 0.0 && kappa.is_finite()) {
            return invalid(format!("kappa must be positive and finite, got {kappa}"));
        }
        if !(alpha_min > 0.0 && alpha_min.is_finite()) {
            return invalid(format!("alpha_min must be positive and finite, got {alpha_min}"));
        }
        Ok(Self { kappa, alpha_min })
    }
}

/// `max(α_min, ‖q1 − q2‖∞ / κ)`.
pub fn disagreement_temperature(q1_row: &[f64], q2_row: &[f64], kappa: f64, alpha_min: f64) -> Result<f64> {
    Coupling::new(kappa, alpha_min)?;
    if q1_row.len() != q2_row.len() {
        return invalid("action-value rows differ in length");
    }
    if q1_row.iter().chain(q2_row).any(|q| !q.is_finite()) {
        return invalid("action values must be finite");
    }
    let gap = crate::mdp::row_sup_distance(q1_row, q2_row);
    Ok(f64::max(alpha_min, gap / kappa))
}

/// The shared per-state field built from two Q-tables.
pub fn shared_temperature(q1: &QTable, q2: &QTable, coupling: Coupling) -> Result<TemperatureField> {
    if !q1.same_shape(q2) {
        return invalid("Q-tables have different shapes");
    }
    let alpha = (0..q1.num_states())
        .map(|s| disagreement_temperature(q1.row(s), q2.row(s), coupling.kappa, coupling.alpha_min))
        .collect::<Result<Vec<_>>>()?;
    Ok(TemperatureField::new(alpha, coupling.alpha_min, None)?.with_kappa(coupling.kappa))
}

/// Directed KLs between the Boltzmann policies of two rows at temperature `alpha`,
/// computed in log space so that underflowing probabilities stay exact.
pub fn boltzmann_kl_pair(q1_row: &[f64], q2_row: &[f64], alpha: f64) -> Result<(f64, f64)> {
    let l1 = boltzmann_log_policy(q1_row, alpha)?;
    let l2 = boltzmann_log_policy(q2_row, alpha)?;
    let kl = |la: &[f64], lb: &[f64]| -> f64 {
        la.iter()
            .zip(lb)
            .map(|(a, b)| if *a == f64::NEG_INFINITY { 0.0 } else { a.exp() * (a - b) })
            .sum::<f64>()
            .max(0.0)
    };
    Ok((kl(&l1, &l2), kl(&l2, &l1)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoupledState {
    q1: QTable,
    q2: QTable,
    iteration: usize,
    initial_disagreement: f64,
}

impl CoupledState {
    pub fn new(q1: QTable, q2: QTable) -> Result<Self> {
        let initial_disagreement = q1.sup_distance(&q2)?;
        Ok(Self {
            q1,
            q2,
            iteration: 0,
            initial_disagreement,
        })
    }

    pub fn q1(&self) -> &QTable {
        &self.q1
    }

    pub fn q2(&self) -> &QTable {
        &self.q2
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// `Δ₀`, recorded at construction.
    pub fn initial_disagreement(&self) -> f64 {
        self.initial_disagreement
    }

    pub fn disagreement(&self) -> f64 {
        self.q1.sup_distance(&self.q2).expect("shapes checked at construction")
    }
}

/// Diagnostics of one coupled step, evaluated on the iterates the step started from.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDiagnostics {
    pub alpha: Vec<f64>,
    pub kl_forward: Vec<f64>,
    pub kl_reverse: Vec<f64>,
    pub kl_symmetric: Vec<f64>,
}

/// Applies `T_{α_t}` with one shared field to both iterates.
pub fn coupled_step(state: &CoupledState, mdp: &FiniteMdp, coupling: Coupling) -> Result<(CoupledState, StepDiagnostics)> {
    state.q1.check_mdp(mdp)?;
    let temps = shared_temperature(&state.q1, &state.q2, coupling)?;
    let mut diag = StepDiagnostics {
        alpha: temps.values().to_vec(),
        kl_forward: Vec::with_capacity(mdp.num_states()),
        kl_reverse: Vec::with_capacity(mdp.num_states()),
        kl_symmetric: Vec::with_capacity(mdp.num_states()),
    };
    for s in 0..mdp.num_states() {
        let (fwd, rev) = boltzmann_kl_pair(state.q1.row(s), state.q2.row(s), temps.get(s))?;
        diag.kl_forward.push(fwd);
        diag.kl_reverse.push(rev);
        diag.kl_symmetric.push(0.5 * (fwd + rev));
    }
    let next = CoupledState {
        q1: soft_bellman(mdp, &state.q1, &temps)?,
        q2: soft_bellman(mdp, &state.q2, &temps)?,
        iteration: state.iteration + 1,
        initial_disagreement: state.initial_disagreement,
    };
    Ok((next, diag))
}

/// Error bound on `‖Q_t⁽ⁱ⁾ − Q*‖∞` for the coupled iteration:
///
/// `γᵗ e₀ + γ α_min log|A| (1 − γᵗ)/(1 − γ) + Δ₀ log|A| t γᵗ / κ`.
pub fn error_bound(
    t: usize,
    e0: f64,
    delta0: f64,
    gamma: f64,
    kappa: f64,
    alpha_min: f64,
    num_actions: usize,
) -> Result<f64> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return invalid(format!("discount must lie in (0, 1), got {gamma}"));
    }
    Coupling::new(kappa, alpha_min)?;
    if !(e0 >= 0.0 && delta0 >= 0.0) || !e0.is_finite() || !delta0.is_finite() {
        return invalid("initial error and disagreement must be finite and non-negative");
    }
    if num_actions == 0 {
        return invalid("num_actions must be positive");
    }
    let log_a = (num_actions as f64).ln();
    let gt = gamma.powi(t as i32);
    let regularisation = gamma * alpha_min * log_a / (1.0 - gamma) * (1.0 - gt);
    // t γᵗ underflows to exactly zero for large t; keep the product well defined.
    let transient = if gt == 0.0 { 0.0 } else { delta0 * log_a / kappa * t as f64 * gt };
    Ok(gt * e0 + regularisation + transient)
}

/// One row of an [`IterationTrace`]: the iterates after step `iteration`.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// `‖Q⁽¹⁾_t − Q⁽²⁾_t‖∞`.
    pub disagreement: f64,
    /// Field applied in the step that produced these iterates, with the
    /// KLs of the policies it induced.
    pub diagnostics: StepDiagnostics,
    pub errors: [f64; 2],
    pub bounds: [f64; 2],
}

/// CSV row of the trace export.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub disagreement: f64,
    pub max_alpha: f64,
    pub max_state_kl_sym: f64,
    pub err_run1: f64,
    pub err_run2: f64,
    pub thm2_bound_run1: f64,
    pub thm2_bound_run2: f64,
}

#[derive(Debug, Clone)]
pub struct IterationTrace {
    pub coupling: Coupling,
    pub discount: f64,
    pub num_actions: usize,
    pub initial_disagreement: f64,
    pub initial_errors: [f64; 2],
    pub q_star: QTable,
    pub records: Vec<IterationRecord>,
    pub final_state: CoupledState,
}

fn max_of(xs: &[f64]) -> f64 {
    xs.iter().copied().fold(0.0, f64::max)
}

impl IterationTrace {
    pub fn rows(&self) -> Vec<TraceRow> {
        self.records
            .iter()
            .map(|r| TraceRow {
                iteration: r.iteration,
                disagreement: r.disagreement,
                max_alpha: max_of(&r.diagnostics.alpha),
                max_state_kl_sym: max_of(&r.diagnostics.kl_symmetric),
                err_run1: r.errors[0],
                err_run2: r.errors[1],
                thm2_bound_run1: r.bounds[0],
                thm2_bound_run2: r.bounds[1],
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut csv = csv::Writer::from_writer(writer);
        for row in self.rows() {
            csv.serialize(row)?;
        }
        csv.flush()?;
        Ok(())
    }

    /// Largest `error − bound` over all records and both runs (≤ 0 when the bound holds).
    pub fn max_bound_excess(&self) -> f64 {
        self.records
            .iter()
            .flat_map(|r| (0..2).map(move |i| r.errors[i] - r.bounds[i]))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest `disagreement − γᵗ Δ₀` over all records.
    pub fn max_contraction_excess(&self) -> f64 {
        self.records
            .iter()
            .map(|r| r.disagreement - self.discount.powi(r.iteration as i32) * self.initial_disagreement)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest pointwise KL (any direction or symmetrised) divided by `2κ`.
    pub fn max_kl_ratio(&self) -> f64 {
        let two_kappa = 2.0 * self.coupling.kappa;
        self.records
            .iter()
            .flat_map(|r| {
                r.diagnostics
                    .kl_forward
                    .iter()
                    .chain(&r.diagnostics.kl_reverse)
                    .chain(&r.diagnostics.kl_symmetric)
                    .copied()
            })
            .fold(0.0, f64::max)
            / two_kappa
    }
}

/// Runs `iters` coupled steps and fills every trace diagnostic, including the
/// per-step error bound. Bounds are reported, not asserted.
pub fn run_coupled(
    mdp: &FiniteMdp,
    q1_init: QTable,
    q2_init: QTable,
    coupling: Coupling,
    iters: usize,
) -> Result<IterationTrace> {
    if iters == 0 {
        return invalid("run_coupled needs at least one iteration");
    }
    q1_init.check_mdp(mdp)?;
    q2_init.check_mdp(mdp)?;
    let q_star = value_iteration(mdp, Backup::Hard, Q_STAR_TOL, DEFAULT_VI_MAX_ITERS)?.q;
    let initial_errors = [q1_init.sup_distance(&q_star)?, q2_init.sup_distance(&q_star)?];
    let mut state = CoupledState::new(q1_init, q2_init)?;
    let delta0 = state.initial_disagreement();
    let (gamma, num_actions) = (mdp.discount(), mdp.num_actions());

    let mut records = Vec::with_capacity(iters);
    for _ in 0..iters {
        let (next, diagnostics) = coupled_step(&state, mdp, coupling)?;
        let t = next.iteration();
        let errors = [next.q1.sup_distance(&q_star)?, next.q2.sup_distance(&q_star)?];
        let mut bounds = [0.0; 2];
        for i in 0..2 {
            bounds[i] = error_bound(t, initial_errors[i], delta0, gamma, coupling.kappa, coupling.alpha_min, num_actions)?;
        }
        records.push(IterationRecord {
            iteration: t,
            disagreement: next.disagreement(),
            diagnostics,
            errors,
            bounds,
        });
        state = next;
    }
    Ok(IterationTrace {
        coupling,
        discount: gamma,
        num_actions,
        initial_disagreement: delta0,
        initial_errors,
        q_star,
        records,
        final_state: state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng_from_seed;

    #[test]
    fn temperature_cases() {
        let q = [0.3, -1.0, 2.0];
        assert_eq!(disagreement_temperature(&q, &q, 1.0, 0.05).unwrap(), 0.05);
        assert_eq!(disagreement_temperature(&[0.0, 1.0], &[0.0, 0.0], 0.5, 0.01).unwrap(), 2.0);
        assert_eq!(disagreement_temperature(&[0.001, 0.0], &[0.0, 0.0], 1.0, 0.05).unwrap(), 0.05);
        assert!(disagreement_temperature(&q, &q, 0.0, 0.05).is_err());
        assert!(disagreement_temperature(&q, &q, 1.0, 0.0).is_err());
        assert!(disagreement_temperature(&q, &q[..2], 1.0, 0.1).is_err());
    }

    #[test]
    fn bound_limits() {
        assert_eq!(error_bound(0, 1.7, 3.0, 0.9, 1.0, 0.01, 4).unwrap(), 1.7);
        let tail = error_bound(10_000, 1.0, 1.0, 0.9, 1.0, 0.01, 4).unwrap();
        let asymptote = 0.9 * 0.01 * 4f64.ln() / 0.1;
        assert!((tail - asymptote).abs() < 1e-9);
        assert!(error_bound(1, 1.0, 1.0, 1.0, 1.0, 0.01, 4).is_err());
        assert!(error_bound(1, 1.0, 1.0, 0.9, 0.0, 0.01, 4).is_err());
    }

    #[test]
    fn equal_iterates_stay_equal() {
        let mut rng = rng_from_seed(4);
        let mdp = FiniteMdp::random(5, 3, 0.9, &mut rng).unwrap();
        let q = QTable::random_uniform(5, 3, -1.0, 1.0, &mut rng);
        let trace = run_coupled(&mdp, q.clone(), q, Coupling::new(0.5, 0.05).unwrap(), 50).unwrap();
        assert_eq!(trace.records.len(), 50);
        for r in &trace.records {
            assert_eq!(r.disagreement, 0.0);
            assert!(r.diagnostics.alpha.iter().all(|a| *a == 0.05));
        }
        assert_eq!(trace.final_state.q1(), trace.final_state.q2());
    }

    #[test]
    fn step_contracts_and_respects_kl_bound() {
        let mut rng = rng_from_seed(8);
        let mdp = FiniteMdp::random(7, 4, 0.9, &mut rng).unwrap();
        let coupling = Coupling::new(0.3, 0.01).unwrap();
        let mut state = CoupledState::new(
            QTable::random_uniform(7, 4, -5.0, 5.0, &mut rng),
            QTable::random_uniform(7, 4, -5.0, 5.0, &mut rng),
        )
        .unwrap();
        for _ in 0..40 {
            let before = state.disagreement();
            let (next, diag) = coupled_step(&state, &mdp, coupling).unwrap();
            assert!(next.disagreement() <= 0.9 * before + 1e-12);
            for kl in diag.kl_forward.iter().chain(&diag.kl_reverse).chain(&diag.kl_symmetric) {
                assert!(*kl <= 2.0 * coupling.kappa + 1e-9);
            }
            state = next;
        }
        assert_eq!(state.iteration(), 40);
    }

    #[test]
    fn trace_csv_has_documented_columns() {
        let mut rng = rng_from_seed(2);
        let mdp = FiniteMdp::random(3, 2, 0.9, &mut rng).unwrap();
        let trace = run_coupled(
            &mdp,
            QTable::random_uniform(3, 2, 0.0, 1.0, &mut rng),
            QTable::random_uniform(3, 2, 0.0, 1.0, &mut rng),
            Coupling::new(1.0, 0.01).unwrap(),
            5,
        )
        .unwrap();
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "iteration,disagreement,max_alpha,max_state_kl_sym,err_run1,err_run2,thm2_bound_run1,thm2_bound_run2"
        );
        assert_eq!(text.lines().count(), 6);
        assert!(trace.max_bound_excess() <= 0.0);
        assert!(trace.max_contraction_excess() <= 1e-12);
    }
}
