//! Toy bandit runs over fixed-α and QED methods, with outcome counts around
//! the reward mode inside the data support.

use std::time::Instant;

use qedlab_core::metrics::{cumulative_action_distance, inter_run_variability_detailed, Divergence, EvalStateSet, MetricRow};
use qedlab_core::tabular::write_log_csv;
use qedlab_core::toy::{train_toy, write_snapshot_csv, BimodalBanditEnv, SquashedGaussianActor, ToyAlphaMode, ToyRun};
use qedlab_core::toy::env::HORIZON;
use rayon::prelude::*;
use serde::Serialize;

use super::{alpha_method_name, method_name, Outcome};
use crate::config::ToyParams;
use crate::manifest::{Check, OutputDir};
use crate::schema::METRIC_COLUMNS;
use crate::Result;

#[derive(Debug, Serialize)]
struct HeadRecord {
    timestep: usize,
    mean: f64,
    log_std: f64,
}

#[derive(Debug, Serialize)]
struct SeedRecord {
    seed: u64,
    final_mean_action: f64,
    near_mode: bool,
    final_alpha: [f64; HORIZON],
    heads: Vec<HeadRecord>,
}

#[derive(Debug, Serialize)]
struct ToyPolicyFile<'a> {
    method: &'a str,
    alpha_mode: ToyAlphaMode,
    mode_center: f64,
    tolerance: f64,
    variability: f64,
    seeds: Vec<SeedRecord>,
}

/// The toy methods in config order: fixed temperatures, then QED k values.
pub fn toy_methods(p: &ToyParams) -> Vec<(String, ToyAlphaMode)> {
    let fixed = p.alphas.iter().map(|&alpha| (alpha_method_name(alpha), ToyAlphaMode::Fixed { alpha }));
    let qed = p.qed_ks.iter().map(|&k| {
        (
            method_name(k),
            ToyAlphaMode::Qed {
                qed: p.qed.with_k(k, 1),
                floor: p.qed_floor,
            },
        )
    });
    fixed.chain(qed).collect()
}

fn train_cell(p: &ToyParams, method: &str, mode: ToyAlphaMode, seed: u64, out: &OutputDir) -> Result<ToyRun> {
    let mut run = train_toy(&p.train.toy_config(mode, seed))?;
    let mut buf = Vec::new();
    write_snapshot_csv(&run.snapshots, &mut buf)?;
    out.write_bytes(&format!("snapshots/{method}/seed{seed}.csv"), &buf)?;
    let mut buf = Vec::new();
    write_log_csv(&run.log, &mut buf)?;
    out.write_bytes(&format!("logs/{method}/seed{seed}.csv"), &buf)?;
    run.snapshots.clear();
    Ok(run)
}

fn heads(actor: &SquashedGaussianActor) -> Result<Vec<HeadRecord>> {
    (0..HORIZON)
        .map(|t| {
            let h = actor.head(&BimodalBanditEnv::features(t))?;
            Ok(HeadRecord {
                timestep: t,
                mean: h.mean,
                log_std: h.log_std,
            })
        })
        .collect()
}

fn metric(metric_name: &str, method: &str, checkpoint: u64, value: f64) -> MetricRow {
    MetricRow {
        metric_name: metric_name.to_string(),
        task: "toy".to_string(),
        method: method.to_string(),
        checkpoint,
        value,
    }
}

/// Metric rows and policy file for one method's finished runs; returns the near-mode count.
fn summarise_method(p: &ToyParams, method: &str, mode: ToyAlphaMode, runs: &[ToyRun], out: &OutputDir, rows: &mut Vec<MetricRow>) -> Result<usize> {
    let steps = p.train.steps as u64;
    let mut near = 0;
    let mut seeds = Vec::new();
    for run in runs {
        let last = run.log.last().expect("a toy run always logs step 0");
        let is_near = run.near_mode(p.mode_center, p.tolerance);
        near += usize::from(is_near);
        rows.push(metric("final_mean_action", method, steps, run.final_mean_action));
        rows.push(metric("near_mode", method, steps, f64::from(u8::from(is_near))));
        rows.push(metric("return_greedy", method, steps, last.return_greedy));
        rows.push(metric("return_soft", method, steps, last.return_soft));
        rows.push(metric("alpha_mean", method, steps, last.alpha_mean));
        seeds.push(SeedRecord {
            seed: run.seed,
            final_mean_action: run.final_mean_action,
            near_mode: is_near,
            final_alpha: run.final_alpha,
            heads: heads(&run.actor)?,
        });
    }
    let mut variability = f64::NAN;
    if runs.len() >= 2 {
        let states = EvalStateSet::from_features(
            (0..HORIZON).map(|t| BimodalBanditEnv::features(t).to_vec()).collect(),
            "one state per timestep",
        )?;
        let actors: Vec<&SquashedGaussianActor> = runs.iter().map(|r| &r.actor).collect();
        variability = inter_run_variability_detailed(&actors, &states, Divergence::GaussianSymmetricKl)?.value;
        rows.push(metric("variability", method, steps, variability));
        let rollouts = runs.iter().map(ToyRun::greedy_rollout).collect::<qedlab_core::Result<Vec<_>>>()?;
        rows.push(metric("action_distance", method, steps, cumulative_action_distance(&rollouts)?));
    }
    rows.push(metric("near_mode_count", method, steps, near as f64));
    out.write_json(
        &format!("policies/{method}.json"),
        &ToyPolicyFile {
            method,
            alpha_mode: mode,
            mode_center: p.mode_center,
            tolerance: p.tolerance,
            variability,
            seeds,
        },
    )?;
    Ok(near)
}

pub fn run_toy(p: &ToyParams, seeds: &[u64], out: &OutputDir) -> Outcome {
    let mut outcome = Outcome::default();
    let methods = toy_methods(p);
    let cells: Vec<(usize, u64)> = (0..methods.len()).flat_map(|m| seeds.iter().map(move |&s| (m, s))).collect();
    let results: Vec<_> = cells
        .par_iter()
        .map(|&(m, seed)| {
            let started = Instant::now();
            let (method, mode) = &methods[m];
            let result = train_cell(p, method, *mode, seed, out);
            (m, format!("{method}/seed{seed}"), started.elapsed().as_secs_f64(), result)
        })
        .collect();
    let mut runs: Vec<Vec<ToyRun>> = vec![Vec::new(); methods.len()];
    let mut failed = vec![false; methods.len()];
    for (m, cell, seconds, result) in results {
        match outcome.absorb_cell(&cell, seconds, result) {
            Some(run) => runs[m].push(run),
            None => failed[m] = true,
        }
    }
    let mut rows = Vec::new();
    let mut near_counts = vec![None; methods.len()];
    for (m, (method, mode)) in methods.iter().enumerate() {
        if failed[m] {
            continue;
        }
        match summarise_method(p, method, *mode, &runs[m], out, &mut rows) {
            Ok(near) => near_counts[m] = Some(near),
            Err(e) => outcome.errors.push(format!("{method}: {e}")),
        }
    }
    if let Err(e) = out.write_csv("metrics.csv", METRIC_COLUMNS, &rows) {
        outcome.errors.push(format!("metrics.csv: {e}"));
    }
    for e in &p.expect {
        let m = methods
            .iter()
            .position(|(name, _)| *name == alpha_method_name(e.alpha))
            .expect("validated");
        let Some(near) = near_counts[m] else { continue };
        let far = seeds.len() - near;
        let method = &methods[m].0;
        let criterion = format!("within ±{} of {}", p.tolerance, p.mode_center);
        if let Some(min) = e.min_near {
            outcome.checks.push(Check::new(
                format!("toy_{method}_near"),
                near >= min,
                format!("{near}/{} seeds {criterion} (need {min})", seeds.len()),
            ));
        }
        if let Some(min) = e.min_far {
            outcome.checks.push(Check::new(
                format!("toy_{method}_far"),
                far >= min,
                format!("{far}/{} seeds not {criterion} (need {min})", seeds.len()),
            ));
        }
    }
    outcome
}
