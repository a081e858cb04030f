//! Bound checks for the disagreement-scaled temperature: the pairwise KL bound
//! on random tuples, and the coupled iteration's error bound and contraction
//! on random MDPs.

use std::time::Instant;

use qedlab_core::coupled::{boltzmann_kl_pair, disagreement_temperature, run_coupled, Coupling, IterationTrace};
use qedlab_core::mdp::{FiniteMdp, QTable};
use qedlab_core::{rng_from_seed, LabRng};
use rand::Rng;
use rayon::prelude::*;

use super::Outcome;
use crate::config::{CoupledInit, CoupledParams, Thm1Params, Thm2Params};
use crate::manifest::{Check, OutputDir};
use crate::schema::{
    CoupledSummaryRow, Thm1Row, Thm2SummaryRow, COUPLED_SUMMARY_COLUMNS, THM1_COLUMNS, THM2_SUMMARY_COLUMNS,
    TRACE_COLUMNS,
};
use crate::Result;

fn log_uniform(rng: &mut LabRng, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo.ln()..hi.ln()).exp()
    }
}

/// One random tuple. The gap between the two rows spans several orders of
/// magnitude relative to `q_scale`, so both the `α_min` floor and the
/// disagreement branch of the temperature are exercised.
fn thm1_tuple(p: &Thm1Params, seed: u64, tuple: usize, rng: &mut LabRng) -> Result<Thm1Row> {
    let num_actions = rng.random_range(p.min_actions..=p.max_actions);
    let kappa = log_uniform(rng, p.kappa_min, p.kappa_max);
    let q1: Vec<f64> = (0..num_actions).map(|_| rng.random_range(-p.q_scale..=p.q_scale)).collect();
    let gap = p.q_scale * 10f64.powf(rng.random_range(-4.0..1.0));
    let q2: Vec<f64> = q1.iter().map(|q| q + gap * rng.random_range(-1.0..=1.0)).collect();
    let disagreement = q1.iter().zip(&q2).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let alpha = disagreement_temperature(&q1, &q2, kappa, p.alpha_min)?;
    let (kl_forward, kl_reverse) = boltzmann_kl_pair(&q1, &q2, alpha)?;
    let kl_symmetric = 0.5 * (kl_forward + kl_reverse);
    let bound = 2.0 * kappa;
    let limit = bound + p.tolerance;
    Ok(Thm1Row {
        seed,
        tuple,
        num_actions,
        kappa,
        disagreement,
        alpha,
        kl_forward,
        kl_reverse,
        kl_symmetric,
        bound,
        satisfied: kl_forward <= limit && kl_reverse <= limit && kl_symmetric <= limit,
    })
}

pub fn run_thm1(p: &Thm1Params, seeds: &[u64], out: &OutputDir) -> Outcome {
    let mut outcome = Outcome::default();
    let results: Vec<_> = seeds
        .par_iter()
        .map(|&seed| {
            let started = Instant::now();
            let result = (|| {
                let mut rng = rng_from_seed(seed);
                let rows = (0..p.tuples)
                    .map(|t| thm1_tuple(p, seed, t, &mut rng))
                    .collect::<Result<Vec<_>>>()?;
                out.write_csv(&format!("thm1/seed{seed}.csv"), THM1_COLUMNS, &rows)?;
                Ok(rows)
            })();
            (seed, started.elapsed().as_secs_f64(), result)
        })
        .collect();
    let mut rows = Vec::new();
    for (seed, seconds, result) in results {
        if let Some(r) = outcome.absorb_cell(&format!("seed{seed}"), seconds, result) {
            rows.extend(r);
        }
    }
    let satisfied = rows.iter().filter(|r| r.satisfied).count();
    let tightness = rows
        .iter()
        .map(|r| r.kl_forward.max(r.kl_reverse) / r.bound)
        .fold(0.0, f64::max);
    outcome.checks.push(Check::new(
        "thm1_kl_bound",
        !rows.is_empty() && satisfied == rows.len(),
        format!("{satisfied}/{} bound satisfactions; max KL / 2κ = {tightness:.4}", rows.len()),
    ));
    outcome
}

struct CoupledCase {
    mdp: FiniteMdp,
    q1: QTable,
    q2: QTable,
    coupling: Coupling,
}

fn thm2_case(p: &Thm2Params, rng: &mut LabRng) -> Result<CoupledCase> {
    let num_states = rng.random_range(p.min_states..=p.max_states);
    let num_actions = rng.random_range(p.min_actions..=p.max_actions);
    let discount = p.discounts[rng.random_range(0..p.discounts.len())];
    let kappa = log_uniform(rng, p.kappa_min, p.kappa_max);
    let mdp = FiniteMdp::random(num_states, num_actions, discount, rng)?;
    let q1 = QTable::random_uniform(num_states, num_actions, 0.0, p.init_scale, rng);
    let q2 = QTable::random_uniform(num_states, num_actions, 0.0, p.init_scale, rng);
    Ok(CoupledCase {
        mdp,
        q1,
        q2,
        coupling: Coupling::new(kappa, p.alpha_min)?,
    })
}

fn bound_violations(trace: &IterationTrace, tolerance: f64) -> usize {
    trace
        .records
        .iter()
        .map(|r| (0..2).filter(|&i| r.errors[i] > r.bounds[i] + tolerance).count())
        .sum()
}

fn contraction_violations(trace: &IterationTrace, tolerance: f64) -> usize {
    let delta0 = trace.initial_disagreement;
    trace
        .records
        .iter()
        .filter(|r| r.disagreement > trace.discount.powi(r.iteration as i32) * delta0 + tolerance * (1.0 + delta0))
        .count()
}

fn seed_cases<T: Send>(
    seeds: &[u64],
    count: usize,
    mut draw: impl FnMut(&mut LabRng) -> Result<T>,
) -> Vec<(u64, usize, Result<T>)> {
    let mut cases = Vec::new();
    for &seed in seeds {
        let mut rng = rng_from_seed(seed);
        for m in 0..count {
            cases.push((seed, m, draw(&mut rng)));
        }
    }
    cases
}

pub fn run_thm2(p: &Thm2Params, seeds: &[u64], out: &OutputDir) -> Outcome {
    let mut outcome = Outcome::default();
    let cases = seed_cases(seeds, p.mdps, |rng| thm2_case(p, rng));
    let results: Vec<_> = cases
        .into_par_iter()
        .map(|(seed, m, case)| {
            let started = Instant::now();
            let result = case.and_then(|c| {
                let trace = run_coupled(&c.mdp, c.q1, c.q2, c.coupling, p.iterations)?;
                out.write_csv(&format!("thm2/seed{seed}/mdp{m:03}.csv"), TRACE_COLUMNS, &trace.rows())?;
                Ok(Thm2SummaryRow {
                    seed,
                    mdp: m,
                    num_states: c.mdp.num_states(),
                    num_actions: c.mdp.num_actions(),
                    discount: c.mdp.discount(),
                    kappa: c.coupling.kappa,
                    initial_disagreement: trace.initial_disagreement,
                    max_bound_excess: trace.max_bound_excess(),
                    max_contraction_excess: trace.max_contraction_excess(),
                    max_kl_ratio: trace.max_kl_ratio(),
                    violations: bound_violations(&trace, p.tolerance),
                })
                .map(|row| (row, contraction_violations(&trace, p.tolerance)))
            });
            (format!("seed{seed}/mdp{m:03}"), started.elapsed().as_secs_f64(), result)
        })
        .collect();
    let mut rows = Vec::new();
    let mut contraction = 0;
    for (cell, seconds, result) in results {
        if let Some((row, c)) = outcome.absorb_cell(&cell, seconds, result) {
            rows.push(row);
            contraction += c;
        }
    }
    if let Err(e) = out.write_csv("thm2_summary.csv", THM2_SUMMARY_COLUMNS, &rows) {
        outcome.errors.push(format!("thm2_summary.csv: {e}"));
    }
    let violations: usize = rows.iter().map(|r| r.violations).sum();
    let max_excess = rows.iter().map(|r| r.max_bound_excess).fold(f64::NEG_INFINITY, f64::max);
    outcome.checks.push(Check::new(
        "thm2_error_bound",
        !rows.is_empty() && violations == 0,
        format!(
            "{violations} violations over {} MDPs x {} iterations x 2 runs; max error - bound = {max_excess:.3e}",
            rows.len(),
            p.iterations
        ),
    ));
    outcome.checks.push(Check::new(
        "thm2_contraction",
        !rows.is_empty() && contraction == 0,
        format!("{contraction} iterations with disagreement above γᵗΔ₀"),
    ));
    let kl_ratio = rows.iter().map(|r| r.max_kl_ratio).fold(0.0, f64::max);
    outcome.checks.push(Check::new(
        "thm2_step_kl_bound",
        !rows.is_empty() && kl_ratio <= 1.0 + p.tolerance,
        format!("max per-step KL / 2κ = {kl_ratio:.4}"),
    ));
    outcome
}

/// `γ α_min log|A| / (1 − γ)`, the asymptotic regularisation term of the error bound.
pub fn regularisation_bias(discount: f64, alpha_min: f64, num_actions: usize) -> f64 {
    discount * alpha_min * (num_actions as f64).ln() / (1.0 - discount)
}

pub fn run_coupled_experiment(p: &CoupledParams, seeds: &[u64], out: &OutputDir) -> Outcome {
    let mut outcome = Outcome::default();
    let cases = seed_cases(seeds, p.mdps, |rng| {
        let mdp = FiniteMdp::random(p.num_states, p.num_actions, p.discount, rng)?;
        let q1 = QTable::random_uniform(p.num_states, p.num_actions, 0.0, p.init_scale, rng);
        let q2 = match p.init {
            CoupledInit::Identical => q1.clone(),
            CoupledInit::Independent => QTable::random_uniform(p.num_states, p.num_actions, 0.0, p.init_scale, rng),
        };
        Ok((mdp, q1, q2))
    });
    let bias_bound = regularisation_bias(p.discount, p.alpha_min, p.num_actions);
    let results: Vec<_> = cases
        .into_par_iter()
        .map(|(seed, m, case)| {
            let started = Instant::now();
            let result = case.and_then(|(mdp, q1, q2)| {
                let trace = run_coupled(&mdp, q1, q2, Coupling::new(p.kappa, p.alpha_min)?, p.iterations)?;
                out.write_csv(&format!("coupled/seed{seed}/mdp{m:03}.csv"), TRACE_COLUMNS, &trace.rows())?;
                let last = trace.records.last().expect("at least one iteration");
                let row = CoupledSummaryRow {
                    seed,
                    mdp: m,
                    initial_disagreement: trace.initial_disagreement,
                    final_error_run1: last.errors[0],
                    final_error_run2: last.errors[1],
                    bias_bound,
                    max_bound_excess: trace.max_bound_excess(),
                    max_contraction_excess: trace.max_contraction_excess(),
                };
                Ok((row, bound_violations(&trace, p.tolerance), contraction_violations(&trace, p.tolerance)))
            });
            (format!("seed{seed}/mdp{m:03}"), started.elapsed().as_secs_f64(), result)
        })
        .collect();
    let mut rows = Vec::new();
    let (mut bound, mut contraction) = (0, 0);
    for (cell, seconds, result) in results {
        if let Some((row, b, c)) = outcome.absorb_cell(&cell, seconds, result) {
            rows.push(row);
            bound += b;
            contraction += c;
        }
    }
    if let Err(e) = out.write_csv("coupled_summary.csv", COUPLED_SUMMARY_COLUMNS, &rows) {
        outcome.errors.push(format!("coupled_summary.csv: {e}"));
    }
    outcome.checks.push(Check::new(
        "coupled_error_bound",
        !rows.is_empty() && bound == 0,
        format!("{bound} violations over {} MDPs", rows.len()),
    ));
    outcome.checks.push(Check::new(
        "coupled_contraction",
        !rows.is_empty() && contraction == 0,
        format!("{contraction} iterations with disagreement above γᵗΔ₀"),
    ));
    if p.init == CoupledInit::Identical {
        let worst = rows
            .iter()
            .map(|r| r.final_error_run1.max(r.final_error_run2))
            .fold(0.0, f64::max);
        outcome.checks.push(Check::new(
            "regularization_bias",
            !rows.is_empty() && worst <= bias_bound + p.tolerance,
            format!("max final error {worst:.6e} vs γ α_min log|A| / (1 − γ) = {bias_bound:.6e}"),
        ));
    }
    outcome
}
