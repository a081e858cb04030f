use std::path::{Path, PathBuf};

use qedlab_harness::config::{parse_str, ReportParams};
use qedlab_harness::manifest::MANIFEST_FILE;
use qedlab_harness::report::summarise;
use qedlab_harness::{run_experiment, ExperimentConfig, ExperimentKind, RunManifest, RunStatus};

const TINY_SWEEP: &str = r#"
kind = "tabular-qed"
seeds = [0, 1, 2]
[tabular]
ks = [0.8, 0.1, 0.4]
[tabular.mdp]
family = "random"
count = 2
[tabular.learner]
steps = 200
"#;

fn tiny_sweep(dir: &Path) -> RunManifest {
    run_experiment(parse_str(TINY_SWEEP).unwrap(), dir).unwrap()
}

fn report(run_dirs: Vec<PathBuf>, out: &Path) -> RunManifest {
    let mut cfg = ExperimentConfig::default_for(ExperimentKind::MetricsReport, vec![0]);
    cfg.report = Some(ReportParams {
        run_dirs,
        ..ReportParams::default()
    });
    run_experiment(cfg, out).unwrap()
}

fn read_rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(Result::unwrap).collect()
}

#[test]
fn single_run_summary_reproduces_its_values() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("run");
    tiny_sweep(&run);
    let (summary, scatter) = summarise(&[run.clone()], &ReportParams::default(), 0).unwrap();
    assert!(scatter.is_empty());
    let metrics = read_rows(&run.join("metrics.csv"));
    for row in summary.rows.iter().filter(|r| r.metric_name == "variability") {
        let source: Vec<f64> = metrics
            .iter()
            .filter(|m| m[0] == row.metric_name && m[1] == row.task && m[2] == row.method)
            .map(|m| m[4].parse().unwrap())
            .collect();
        assert_eq!(source.len(), 1);
        assert_eq!(row.n, 1);
        assert_eq!(row.value, source[0]);
        assert_eq!((row.ci_low, row.ci_high), (source[0], source[0]));
    }
}

#[test]
fn rows_follow_k_order_with_baseline_last_and_carry_spearman() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("run");
    tiny_sweep(&run);
    let (summary, _) = summarise(&[run], &ReportParams::default(), 0).unwrap();
    let methods: Vec<&str> = summary
        .rows
        .iter()
        .filter(|r| r.task == "mdp0" && r.metric_name == "variability")
        .map(|r| r.method.as_str())
        .collect();
    assert_eq!(methods, ["qed_k0.1", "qed_k0.4", "qed_k0.8", "baseline"]);
    let rho = summary.spearman_k_v["mdp0"].expect("three finite k values");
    assert!((-1.0..=1.0).contains(&rho));
    assert!(summary.rows.iter().filter(|r| r.task == "mdp0").all(|r| r.spearman_k_v == Some(rho)));
    let alpha_rows: Vec<_> = summary.rows.iter().filter(|r| r.metric_name == "alpha_mean").collect();
    assert!(alpha_rows.iter().all(|r| r.n == 3 && r.estimator == "mean"));
}

#[test]
fn duplicate_run_dirs_are_flagged_not_averaged() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("run");
    let copy = tmp.path().join("copy");
    tiny_sweep(&run);
    tiny_sweep(&copy);
    let once = report(vec![run.clone()], &tmp.path().join("once"));
    let twice = report(vec![run.clone(), copy.clone()], &tmp.path().join("twice"));
    assert_eq!(once.status, RunStatus::Passed);
    assert_eq!(twice.status, RunStatus::Passed);
    let a = std::fs::read(tmp.path().join("once/summary.csv")).unwrap();
    let b = std::fs::read(tmp.path().join("twice/summary.csv")).unwrap();
    assert_eq!(a, b);
    let json: serde_json::Value = serde_json::from_slice(&std::fs::read(tmp.path().join("twice/summary.json")).unwrap()).unwrap();
    let dups = json["duplicates"].as_array().unwrap();
    assert_eq!(dups.len(), 1);
    assert_eq!(dups[0]["run_dir"], copy.display().to_string());
}

/// A fake run directory holding `values` for one metric under a distinct hash.
fn fake_run(dir: &Path, template: &RunManifest, hash: &str, values: &[f64]) {
    std::fs::create_dir_all(dir).unwrap();
    let mut manifest = template.clone();
    manifest.config_hash = hash.to_string();
    std::fs::write(dir.join(MANIFEST_FILE), serde_json::to_vec(&manifest).unwrap()).unwrap();
    let mut text = String::from("metric_name,task,method,checkpoint,value\n");
    for v in values {
        text.push_str(&format!("return_greedy,t,qed_k0.2,10,{v}\n"));
    }
    std::fs::write(dir.join("metrics.csv"), text).unwrap();
}

#[test]
fn large_groups_use_iqm_with_bootstrap_interval() {
    let tmp = tempfile::tempdir().unwrap();
    let template = tiny_sweep(&tmp.path().join("template"));
    fake_run(&tmp.path().join("a"), &template, "a", &[1.0, 2.0, 3.0, 4.0]);
    fake_run(&tmp.path().join("b"), &template, "b", &[5.0, 6.0, 7.0, 8.0]);
    let (summary, _) = summarise(&[tmp.path().join("a"), tmp.path().join("b")], &ReportParams::default(), 0).unwrap();
    let row = &summary.rows[0];
    assert_eq!((row.n, row.estimator.as_str()), (8, "iqm"));
    assert!((row.value - 4.5).abs() < 1e-12);
    assert!(row.ci_low <= row.value && row.value <= row.ci_high);
    assert_eq!(row.k, Some(0.2));
}

#[test]
fn schema_mismatch_names_file_and_column() {
    let tmp = tempfile::tempdir().unwrap();
    let template = tiny_sweep(&tmp.path().join("template"));
    let bad = tmp.path().join("bad");
    fake_run(&bad, &template, "bad", &[1.0]);
    let text = std::fs::read_to_string(bad.join("metrics.csv")).unwrap().replacen("metric_name", "metric", 1);
    std::fs::write(bad.join("metrics.csv"), text).unwrap();
    let manifest = report(vec![bad.clone()], &tmp.path().join("out"));
    assert_eq!(manifest.status, RunStatus::Failed);
    let err = manifest.errors.join("\n");
    assert!(err.contains("metrics.csv") && err.contains("metric_name"), "{err}");
}
