//! Experiment harness: validated configs, deterministic runs into a manifest
//! directory, and aggregation of finished runs.
//!
//! A run writes every artefact under its output directory and finishes with
//! `manifest.json`, which lists each file with its size and SHA-256, the
//! declared checks, operational errors and timings.

pub mod config;
pub mod error;
pub mod experiments;
pub mod manifest;
pub mod report;
pub mod schema;

use std::path::{Path, PathBuf};
use std::time::Instant;

pub use config::{ExperimentConfig, ExperimentKind};
pub use error::{HarnessError, Result};
pub use manifest::{RunManifest, RunStatus};

use experiments::Outcome;
use manifest::{OutputDir, Timings, VERSION_TAG};

/// Output directory used when neither the CLI nor the config names one.
pub fn default_out_dir(config: &ExperimentConfig) -> Result<PathBuf> {
    let hash = config.config_hash()?;
    Ok(PathBuf::from("runs").join(format!("{}-{}", config.kind.name(), &hash[..12])))
}

fn dispatch(config: &ExperimentConfig, out: &OutputDir) -> Outcome {
    let seeds = &config.seeds;
    match config.kind {
        ExperimentKind::VerifyThm1 => experiments::theory::run_thm1(config.thm1.as_ref().expect("validated"), seeds, out),
        ExperimentKind::VerifyThm2 => experiments::theory::run_thm2(config.thm2.as_ref().expect("validated"), seeds, out),
        ExperimentKind::Coupled => experiments::theory::run_coupled_experiment(config.coupled.as_ref().expect("validated"), seeds, out),
        ExperimentKind::TabularQed => experiments::tabular::run_tabular(config.tabular.as_ref().expect("validated"), seeds, out),
        ExperimentKind::Toy => experiments::toy::run_toy(config.toy.as_ref().expect("validated"), seeds, out),
        ExperimentKind::MetricsReport => {
            let p = config.report.as_ref().expect("validated");
            let mut outcome = Outcome::default();
            let started = Instant::now();
            let result = report::write_report(&p.run_dirs, p, seeds[0], out);
            outcome.absorb_cell("report", started.elapsed().as_secs_f64(), result);
            outcome
        }
    }
}

/// Validates `config`, runs it into `out_dir` and writes the manifest.
///
/// Config errors are returned before anything is written. Failures inside
/// cells are recorded in the manifest instead, and set its status.
pub fn run_experiment(mut config: ExperimentConfig, out_dir: &Path) -> Result<RunManifest> {
    config.validate()?;
    let config_hash = config.config_hash()?;
    let config_value = serde_json::to_value(&config)?;
    let out = OutputDir::create(out_dir)?;
    log::info!("running {} into {}", config.kind.name(), out_dir.display());

    let started = Instant::now();
    let mut outcome = dispatch(&config, &out);
    for path in out.incomplete() {
        outcome.errors.push(format!("{path}: missing or empty after the run"));
    }
    let status = if !outcome.errors.is_empty() {
        RunStatus::Failed
    } else if outcome.checks.iter().any(|c| !c.passed) {
        RunStatus::Violations
    } else {
        RunStatus::Passed
    };
    let manifest = RunManifest {
        kind: config.kind.name().to_string(),
        config_hash,
        version: VERSION_TAG.to_string(),
        seeds: config.seeds.clone(),
        config: config_value,
        files: out.entries(),
        checks: outcome.checks,
        errors: outcome.errors,
        status,
        timings: Timings {
            total_seconds: started.elapsed().as_secs_f64(),
            cells: outcome.cells,
        },
    };
    out.write_json(manifest::MANIFEST_FILE, &manifest)?;
    for check in &manifest.checks {
        log::info!("check {}: {} ({})", check.name, if check.passed { "ok" } else { "VIOLATED" }, check.detail);
    }
    for e in &manifest.errors {
        log::error!("{e}");
    }
    Ok(manifest)
}

/// [`run_experiment`] inside a dedicated pool of `threads` workers, or the
/// global pool when `None`.
pub fn run_with_parallelism(config: ExperimentConfig, out_dir: &Path, threads: Option<usize>) -> Result<RunManifest> {
    match threads {
        None => run_experiment(config, out_dir),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| error::HarnessError::Config {
                    key: "parallel".to_string(),
                    message: e.to_string(),
                })?;
            pool.install(|| run_experiment(config, out_dir))
        }
    }
}
