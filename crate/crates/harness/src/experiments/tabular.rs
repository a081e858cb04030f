//! Tabular QED experiments: the k-sweep against the fixed-floor baseline and
//! the early-disagreement correlation study.

use std::time::Instant;

use qedlab_core::metrics::{correlation, cumulative_action_distance, CorrelationKind, MetricRow};
use qedlab_core::mdp::{CategoricalPolicy, FiniteMdp};
use qedlab_core::rng_from_seed;
use qedlab_core::tabular::{disagreement_correlation_study, seed_sweep, write_log_csv, SeedSweep, TemperatureVariant};
use rayon::prelude::*;
use serde::Serialize;

use super::{method_name, Outcome};
use crate::config::{MdpFamily, TabularParams, TabularStudy};
use crate::manifest::{Check, OutputDir};
use crate::schema::METRIC_COLUMNS;
use crate::Result;

/// The MDPs of a family with their task labels.
pub fn build_family(family: &MdpFamily) -> Result<Vec<(String, FiniteMdp)>> {
    match family {
        MdpFamily::Random(r) => (0..r.count)
            .map(|m| {
                let mdp = FiniteMdp::random(r.num_states, r.num_actions, r.discount, &mut rng_from_seed(r.base_seed + m as u64))?;
                Ok((format!("mdp{m}"), mdp))
            })
            .collect(),
        MdpFamily::Sparse(s) => (0..s.count)
            .map(|m| {
                let support = s.support_min + m % (s.support_max - s.support_min + 1);
                let mdp = FiniteMdp::random_sparse(
                    s.num_states,
                    s.num_actions,
                    support,
                    s.discount,
                    &mut rng_from_seed(s.base_seed + m as u64),
                )?;
                Ok((format!("mdp{m}"), mdp))
            })
            .collect(),
        MdpFamily::Chain(c) => Ok(vec![("chain".to_string(), FiniteMdp::chain(c.num_states, c.num_actions, c.discount)?)]),
        MdpFamily::File(f) => f
            .paths
            .iter()
            .enumerate()
            .map(|(m, path)| Ok((format!("mdp{m}"), FiniteMdp::load(path)?)))
            .collect(),
    }
}

#[derive(Debug, Serialize)]
struct SeedPolicy<'a> {
    seed: u64,
    rows: Vec<&'a [f64]>,
    final_alpha: &'a [f64],
}

#[derive(Debug, Serialize)]
struct PolicyFile<'a> {
    task: &'a str,
    method: &'a str,
    k: Option<f64>,
    variability: f64,
    excluded_divergences: usize,
    eval_states: &'a [usize],
    policies: Vec<SeedPolicy<'a>>,
}

/// Greedy rollouts of every policy from state 0 under one shared transition
/// stream, so trajectories differ only through the policies.
fn greedy_rollouts(mdp: &FiniteMdp, policies: &[&CategoricalPolicy], horizon: usize, stream_seed: u64) -> Vec<Vec<Vec<f64>>> {
    policies
        .iter()
        .map(|policy| {
            let mut rng = rng_from_seed(stream_seed);
            let mut state = 0;
            (0..horizon)
                .map(|_| {
                    let row = policy.row(state);
                    let action = (0..row.len()).fold(0, |best, a| if row[a] > row[best] { a } else { best });
                    let mut one_hot = vec![0.0; row.len()];
                    one_hot[action] = 1.0;
                    state = mdp.sample_next_state(state, action, &mut rng);
                    one_hot
                })
                .collect()
        })
        .collect()
}

fn metric(metric_name: &str, task: &str, method: &str, checkpoint: u64, value: f64) -> MetricRow {
    MetricRow {
        metric_name: metric_name.to_string(),
        task: task.to_string(),
        method: method.to_string(),
        checkpoint,
        value,
    }
}

fn sweep_rows(task: &str, method: &str, steps: u64, sweep: &SeedSweep, action_distance: f64) -> Vec<MetricRow> {
    let mut rows = vec![metric("variability", task, method, steps, sweep.variability)];
    for run in &sweep.runs {
        let last = run.final_row();
        rows.push(metric("return_greedy", task, method, steps, last.return_greedy));
        rows.push(metric("return_soft", task, method, steps, last.return_soft));
        rows.push(metric("alpha_mean", task, method, steps, last.alpha_mean));
        rows.push(metric("early_disagreement", task, method, steps, run.early_disagreement));
    }
    rows.push(metric("action_distance", task, method, steps, action_distance));
    rows
}

fn run_cell(
    p: &TabularParams,
    task: &str,
    task_index: usize,
    mdp: &FiniteMdp,
    k: f64,
    seeds: &[u64],
    out: &OutputDir,
) -> Result<(Vec<MetricRow>, f64)> {
    let method = method_name(k);
    let variant = TemperatureVariant::Qed {
        qed: p.qed.with_k(k, 1),
        floor: p.floor,
        disagreement: p.disagreement,
    };
    let sweep = seed_sweep(mdp, &p.learner.learner(variant, 0), seeds)?;
    for run in &sweep.runs {
        let mut buf = Vec::new();
        write_log_csv(&run.log, &mut buf)?;
        out.write_bytes(&format!("logs/{task}/{method}/seed{}.csv", run.seed), &buf)?;
    }
    let policies: Vec<&CategoricalPolicy> = sweep.runs.iter().map(|r| &r.final_policy).collect();
    let rollouts = greedy_rollouts(mdp, &policies, p.rollout_horizon, task_index as u64);
    let action_distance = cumulative_action_distance(&rollouts)?;
    out.write_json(
        &format!("policies/{task}/{method}.json"),
        &PolicyFile {
            task,
            method: &method,
            k: k.is_finite().then_some(k),
            variability: sweep.variability,
            excluded_divergences: sweep.excluded,
            eval_states: &sweep.eval_states,
            policies: sweep
                .runs
                .iter()
                .map(|r| SeedPolicy {
                    seed: r.seed,
                    rows: (0..r.final_policy.num_states()).map(|s| r.final_policy.row(s)).collect(),
                    final_alpha: &r.final_alpha,
                })
                .collect(),
        },
    )?;
    let rows = sweep_rows(task, &method, p.learner.steps as u64, &sweep, action_distance);
    Ok((rows, sweep.variability))
}

pub fn run_tabular(p: &TabularParams, seeds: &[u64], out: &OutputDir) -> Outcome {
    let mut outcome = Outcome::default();
    let started = Instant::now();
    let family = build_family(&p.mdp);
    let Some(mdps) = outcome.absorb_cell("mdp-family", started.elapsed().as_secs_f64(), family) else {
        return outcome;
    };
    for (task, mdp) in &mdps {
        let written = mdp.to_json().map_err(Into::into).and_then(|text| out.write_bytes(&format!("mdps/{task}.json"), text.as_bytes()));
        if let Err(e) = written {
            outcome.errors.push(format!("mdps/{task}.json: {e}"));
        }
    }
    match p.study {
        TabularStudy::KSweep => k_sweep(p, &mdps, seeds, out, &mut outcome),
        TabularStudy::Correlation => correlation_study(p, &mdps, seeds, out, &mut outcome),
    }
    outcome
}

fn k_sweep(p: &TabularParams, mdps: &[(String, FiniteMdp)], seeds: &[u64], out: &OutputDir, outcome: &mut Outcome) {
    let mut ks = p.ks.clone();
    if p.baseline {
        ks.push(f64::INFINITY);
    }
    let cells: Vec<(usize, f64)> = (0..mdps.len()).flat_map(|m| ks.iter().map(move |&k| (m, k))).collect();
    let results: Vec<_> = cells
        .par_iter()
        .map(|&(m, k)| {
            let started = Instant::now();
            let (task, mdp) = &mdps[m];
            let result = run_cell(p, task, m, mdp, k, seeds, out);
            (m, k, started.elapsed().as_secs_f64(), result)
        })
        .collect();
    let mut rows = Vec::new();
    let mut variability = vec![vec![f64::NAN; ks.len()]; mdps.len()];
    for (m, k, seconds, result) in results {
        let cell = format!("{}/{}", mdps[m].0, method_name(k));
        if let Some((cell_rows, v)) = outcome.absorb_cell(&cell, seconds, result) {
            rows.extend(cell_rows);
            let j = ks.iter().position(|x| x.to_bits() == k.to_bits()).expect("cell k is in the grid");
            variability[m][j] = v;
        }
    }
    if let Err(e) = out.write_csv("metrics.csv", METRIC_COLUMNS, &rows) {
        outcome.errors.push(format!("metrics.csv: {e}"));
    }
    if let Some(direction_k) = p.checks.direction_k {
        outcome.checks.push(direction_check(p, &ks, direction_k, mdps, &variability));
    }
}

/// Per MDP: `V(direction_k) < V(baseline)` and `spearman(k, V) > 0` over the
/// finite grid; passes when the fraction of MDPs satisfying both reaches the
/// configured minimum.
fn direction_check(p: &TabularParams, ks: &[f64], direction_k: f64, mdps: &[(String, FiniteMdp)], variability: &[Vec<f64>]) -> Check {
    let finite: Vec<usize> = (0..ks.len()).filter(|&j| ks[j].is_finite()).collect();
    let kd = ks.iter().position(|&k| k == direction_k).expect("validated");
    let base = ks.len() - 1;
    let mut passed = 0;
    let mut details = Vec::new();
    for (m, (task, _)) in mdps.iter().enumerate() {
        let v = &variability[m];
        let fk: Vec<f64> = finite.iter().map(|&j| ks[j]).collect();
        let fv: Vec<f64> = finite.iter().map(|&j| v[j]).collect();
        let rho = correlation(&fk, &fv, CorrelationKind::Spearman).ok();
        let ok = v[kd] < v[base] && rho.is_some_and(|r| r > 0.0);
        passed += usize::from(ok);
        details.push(format!(
            "{task}: V(k={direction_k})={:.4e} V(baseline)={:.4e} spearman={} {}",
            v[kd],
            v[base],
            rho.map_or("n/a".to_string(), |r| format!("{r:.3}")),
            if ok { "ok" } else { "miss" }
        ));
    }
    let fraction = passed as f64 / mdps.len() as f64;
    Check::new(
        "consistency_direction",
        fraction >= p.checks.direction_min_fraction,
        format!(
            "{passed}/{} MDPs (need fraction {}); {}",
            mdps.len(),
            p.checks.direction_min_fraction,
            details.join("; ")
        ),
    )
}

fn correlation_study(p: &TabularParams, mdps: &[(String, FiniteMdp)], seeds: &[u64], out: &OutputDir, outcome: &mut Outcome) {
    let started = Instant::now();
    let family: Vec<FiniteMdp> = mdps.iter().map(|(_, m)| m.clone()).collect();
    let result = disagreement_correlation_study(&family, &p.learner.learner(p.correlation_temperature, 0), seeds)
        .map_err(Into::into)
        .and_then(|study| {
            let mut buf = Vec::new();
            study.write_csv(&mut buf)?;
            out.write_bytes("correlation.csv", &buf)?;
            let steps = p.learner.steps as u64;
            let rows = vec![
                metric("pearson_r", "family", "correlation", steps, study.pearson_r),
                metric("r_squared", "family", "correlation", steps, study.r_squared),
            ];
            out.write_csv("metrics.csv", METRIC_COLUMNS, &rows)?;
            Ok(study)
        });
    if let Some(study) = outcome.absorb_cell("correlation-study", started.elapsed().as_secs_f64(), result) {
        if p.checks.positive_correlation {
            outcome.checks.push(Check::new(
                "correlation_positive",
                study.pearson_r > 0.0,
                format!("pearson r = {:.4}, R² = {:.4} over {} MDPs", study.pearson_r, study.r_squared, study.points.len()),
            ));
        }
    }
}
