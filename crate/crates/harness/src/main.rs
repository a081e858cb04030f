use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qedlab_harness::config::{parse_config, parse_seed_list, ReportParams};
use qedlab_harness::{default_out_dir, run_with_parallelism, ExperimentConfig, ExperimentKind, HarnessError, Result};

/// Runs QED experiments into manifest directories and aggregates them.
#[derive(Debug, Parser)]
#[command(name = "qedlab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Pairwise KL bound on random Q-value pairs.
    VerifyThm1(RunArgs),
    /// Coupled soft iteration bounds on random MDPs.
    VerifyThm2(RunArgs),
    /// Coupled soft iteration traces with a chosen initialisation.
    Coupled(RunArgs),
    /// Tabular QED learners: k-sweep or correlation study.
    TabularQed(RunArgs),
    /// Continuous bimodal bandit with fixed-α and QED actors.
    Toy(RunArgs),
    /// Aggregate finished run directories into a summary.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// TOML config; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides `out_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed list such as `0,1,5..8`; overrides the config.
    #[arg(long)]
    seeds: Option<String>,
    /// Worker threads; defaults to one per core.
    #[arg(long)]
    parallel: Option<usize>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Run directories to aggregate, appended to those in the config.
    run_dirs: Vec<PathBuf>,
}

fn load(kind: ExperimentKind, args: &RunArgs) -> Result<ExperimentConfig> {
    let mut config = match &args.config {
        Some(path) => {
            let config = parse_config(path)?;
            if config.kind != kind {
                return Err(HarnessError::Config {
                    key: "kind".to_string(),
                    message: format!("config is `{}` but the subcommand runs `{}`", config.kind.name(), kind.name()),
                });
            }
            config
        }
        None => ExperimentConfig::default_for(kind, vec![0]),
    };
    if let Some(seeds) = &args.seeds {
        config.seeds = parse_seed_list(seeds)?;
    }
    if let Some(out) = &args.out {
        config.out_dir = Some(out.clone());
    }
    Ok(config)
}

fn run(cli: Cli) -> Result<i32> {
    let (kind, args, extra_dirs) = match cli.command {
        Command::VerifyThm1(a) => (ExperimentKind::VerifyThm1, a, Vec::new()),
        Command::VerifyThm2(a) => (ExperimentKind::VerifyThm2, a, Vec::new()),
        Command::Coupled(a) => (ExperimentKind::Coupled, a, Vec::new()),
        Command::TabularQed(a) => (ExperimentKind::TabularQed, a, Vec::new()),
        Command::Toy(a) => (ExperimentKind::Toy, a, Vec::new()),
        Command::Report(a) => (ExperimentKind::MetricsReport, a.run, a.run_dirs),
    };
    let mut config = load(kind, &args)?;
    if !extra_dirs.is_empty() {
        config.report.get_or_insert_with(ReportParams::default).run_dirs.extend(extra_dirs);
    }
    config.validate()?;
    let out = match &config.out_dir {
        Some(dir) => dir.clone(),
        None => default_out_dir(&config)?,
    };
    let manifest = run_with_parallelism(config, &out, args.parallel)?;
    for check in &manifest.checks {
        println!("{} {}: {}", if check.passed { "ok  " } else { "FAIL" }, check.name, check.detail);
    }
    for e in &manifest.errors {
        eprintln!("error: {e}");
    }
    println!("{:?}: {}", manifest.status, out.display());
    Ok(manifest.status.exit_code())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
