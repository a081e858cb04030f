//! Aggregation of finished run directories into `summary.csv` and `summary.json`.
//!
//! Rows are grouped by `(task, method, metric, checkpoint)` and pooled across
//! runs. Groups with at least four values report the IQM with a percentile
//! bootstrap interval; smaller groups report the mean with `[min, max]`. A run
//! directory whose config hash was already seen is flagged as a duplicate and
//! skipped, never averaged in.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use qedlab_core::metrics::{correlation, iqm_with_bootstrap, CorrelationKind, MetricRow};
use qedlab_core::tabular::CorrelationPoint;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::config::ReportParams;
use crate::error::{io_err, HarnessError, Result};
use crate::experiments::method_k;
use crate::manifest::{OutputDir, RunManifest};
use crate::schema::{ScatterRow, SummaryCsvRow, CORRELATION_COLUMNS, METRIC_COLUMNS, SCATTER_COLUMNS, SUMMARY_COLUMNS};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Duplicate {
    pub run_dir: String,
    pub duplicate_of: String,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationSummary {
    pub run: String,
    pub points: usize,
    pub pearson_r: Option<f64>,
    pub r_squared: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub run_dirs: Vec<String>,
    pub duplicates: Vec<Duplicate>,
    pub bootstrap_resamples: usize,
    pub confidence: f64,
    pub bootstrap_seed: u64,
    pub spearman_k_v: BTreeMap<String, Option<f64>>,
    pub correlation: Vec<CorrelationSummary>,
    pub rows: Vec<SummaryCsvRow>,
}

/// Reads a CSV whose header must equal `columns` exactly.
pub fn read_strict_csv<T: DeserializeOwned>(path: &Path, columns: &[&str]) -> Result<Vec<T>> {
    let schema = |message: String| HarnessError::Schema {
        file: path.to_path_buf(),
        message,
    };
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    let mut reader = csv::Reader::from_reader(file);
    let header = reader.headers().map_err(|e| schema(e.to_string()))?.clone();
    for (i, expected) in columns.iter().enumerate() {
        match header.get(i) {
            Some(found) if found == *expected => {}
            Some(found) => return Err(schema(format!("column {} is `{found}`, expected `{expected}`", i + 1))),
            None => return Err(schema(format!("missing column `{expected}`"))),
        }
    }
    if let Some(extra) = header.get(columns.len()) {
        return Err(schema(format!("unexpected column `{extra}`")));
    }
    reader
        .deserialize()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| schema(format!("row {}: {e}", i + 1))))
        .collect()
}

type GroupKey = (String, String, String, u64);

/// Task, then QED methods by ascending k with the baseline last, then other
/// methods by name, then metric and checkpoint.
fn compare_keys(a: &GroupKey, b: &GroupKey) -> Ordering {
    let method_order = |m: &str| match method_k(m) {
        Some(k) => (0, k),
        None => (1, 0.0),
    };
    let (oa, ka) = method_order(&a.1);
    let (ob, kb) = method_order(&b.1);
    a.0.cmp(&b.0)
        .then(oa.cmp(&ob))
        .then(ka.total_cmp(&kb))
        .then(a.1.cmp(&b.1))
        .then(a.2.cmp(&b.2))
        .then(a.3.cmp(&b.3))
}

fn aggregate(values: &[f64], params: &ReportParams, seed: u64) -> Result<(String, f64, f64, f64)> {
    if values.is_empty() {
        return Ok(("mean".into(), f64::NAN, f64::NAN, f64::NAN));
    }
    if values.len() >= 4 {
        let s = iqm_with_bootstrap(values, params.confidence, params.bootstrap_resamples, seed)?;
        return Ok(("iqm".into(), s.iqm, s.ci_low, s.ci_high));
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(("mean".into(), mean, lo, hi))
}

/// Builds the summary from run directories. `bootstrap_seed` seeds every interval.
pub fn summarise(run_dirs: &[PathBuf], params: &ReportParams, bootstrap_seed: u64) -> Result<(Summary, Vec<ScatterRow>)> {
    let mut seen: BTreeMap<String, String> = BTreeMap::new();
    let mut used = Vec::new();
    let mut duplicates = Vec::new();
    let mut groups: BTreeMap<GroupKey, Vec<f64>> = BTreeMap::new();
    let mut scatter = Vec::new();
    let mut correlations = Vec::new();

    for dir in run_dirs {
        let label = dir.display().to_string();
        let manifest = RunManifest::load(dir)?;
        if let Some(first) = seen.get(&manifest.config_hash) {
            log::warn!("{label} repeats the config of {first}; skipping it");
            duplicates.push(Duplicate {
                run_dir: label,
                duplicate_of: first.clone(),
                config_hash: manifest.config_hash,
            });
            continue;
        }
        seen.insert(manifest.config_hash.clone(), label.clone());
        used.push(label.clone());

        let metrics_path = dir.join("metrics.csv");
        if metrics_path.exists() {
            let rows: Vec<MetricRow> = read_strict_csv(&metrics_path, METRIC_COLUMNS)?;
            for r in rows {
                groups.entry((r.task, r.method, r.metric_name, r.checkpoint)).or_default().push(r.value);
            }
        }
        let corr_path = dir.join("correlation.csv");
        if corr_path.exists() {
            let points: Vec<CorrelationPoint> = read_strict_csv(&corr_path, CORRELATION_COLUMNS)?;
            let x: Vec<f64> = points.iter().map(|p| p.early_disagreement).collect();
            let y: Vec<f64> = points.iter().map(|p| p.q1_dispersion).collect();
            let r = correlation(&x, &y, CorrelationKind::Pearson).ok();
            correlations.push(CorrelationSummary {
                run: label.clone(),
                points: points.len(),
                pearson_r: r,
                r_squared: r.map(|r| r * r),
            });
            scatter.extend(points.into_iter().map(|p| ScatterRow {
                run: label.clone(),
                mdp_index: p.mdp_index,
                early_disagreement: p.early_disagreement,
                q1_dispersion: p.q1_dispersion,
            }));
        }
    }

    let mut keys: Vec<GroupKey> = groups.keys().cloned().collect();
    keys.sort_by(compare_keys);
    let mut rows = Vec::with_capacity(keys.len());
    for key in keys {
        let values: Vec<f64> = groups[&key].iter().copied().filter(|v| v.is_finite()).collect();
        let (estimator, value, ci_low, ci_high) = aggregate(&values, params, bootstrap_seed)?;
        let (task, method, metric_name, checkpoint) = key;
        rows.push(SummaryCsvRow {
            k: method_k(&method),
            task,
            method,
            metric_name,
            checkpoint,
            n: values.len(),
            estimator,
            value,
            ci_low,
            ci_high,
            spearman_k_v: None,
        });
    }

    let mut spearman = BTreeMap::new();
    for task in rows.iter().map(|r| r.task.clone()).collect::<std::collections::BTreeSet<_>>() {
        let (ks, vs): (Vec<f64>, Vec<f64>) = rows
            .iter()
            .filter(|r| r.task == task && r.metric_name == "variability" && r.value.is_finite())
            .filter_map(|r| r.k.filter(|k| k.is_finite()).map(|k| (k, r.value)))
            .unzip();
        let rho = if ks.len() >= 3 {
            correlation(&ks, &vs, CorrelationKind::Spearman).ok()
        } else {
            None
        };
        spearman.insert(task, rho);
    }
    for row in &mut rows {
        row.spearman_k_v = spearman[&row.task];
    }

    Ok((
        Summary {
            run_dirs: used,
            duplicates,
            bootstrap_resamples: params.bootstrap_resamples,
            confidence: params.confidence,
            bootstrap_seed,
            spearman_k_v: spearman,
            correlation: correlations,
            rows,
        },
        scatter,
    ))
}

pub fn write_report(run_dirs: &[PathBuf], params: &ReportParams, bootstrap_seed: u64, out: &OutputDir) -> Result<Summary> {
    let (summary, scatter) = summarise(run_dirs, params, bootstrap_seed)?;
    out.write_csv("summary.csv", SUMMARY_COLUMNS, &summary.rows)?;
    out.write_json("summary.json", &summary)?;
    if !scatter.is_empty() {
        out.write_csv("correlation_scatter.csv", SCATTER_COLUMNS, &scatter)?;
    }
    Ok(summary)
}
