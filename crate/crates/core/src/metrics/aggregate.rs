use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng_from_seed;

/// One metric value in the `(metric_name, task, method, checkpoint, value)` CSV schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub metric_name: String,
    pub task: String,
    pub method: String,
    pub checkpoint: u64,
    pub value: f64,
}

/// A bootstrap summary row: the metric schema plus the interval and its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub metric_name: String,
    pub task: String,
    pub method: String,
    pub checkpoint: u64,
    pub value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub num_resamples: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateSummary {
    pub iqm: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub num_bootstrap: usize,
    pub confidence: f64,
}

/// Percentile of already sorted data with linear interpolation between order
/// statistics (position `p · (n − 1)`).
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    let pos = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

fn sorted_copy(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

fn iqm_sorted(sorted: &[f64]) -> f64 {
    let q1 = percentile(sorted, 0.25);
    let q3 = percentile(sorted, 0.75);
    let kept: Vec<f64> = sorted.iter().copied().filter(|x| *x >= q1 && *x <= q3).collect();
    kept.iter().sum::<f64>() / kept.len() as f64
}

/// Interquartile mean: values strictly below the 25th or strictly above the
/// 75th (linearly interpolated) percentile are dropped, the rest averaged.
pub fn iqm(values: &[f64]) -> Result<f64> {
    if values.len() < 4 {
        return invalid(format!("IQM needs at least 4 values, got {}", values.len()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return invalid("IQM values must be finite");
    }
    Ok(iqm_sorted(&sorted_copy(values)))
}

/// IQM with a percentile-bootstrap confidence interval.
///
/// The interval is widened to contain the point estimate when resampling
/// places it outside.
pub fn iqm_with_bootstrap(values: &[f64], confidence: f64, num_resamples: usize, seed: u64) -> Result<AggregateSummary> {
    let point = iqm(values)?;
    if !(confidence > 0.0 && confidence < 1.0) {
        return invalid(format!("confidence must lie in (0, 1), got {confidence}"));
    }
    if num_resamples == 0 {
        return invalid("bootstrap needs at least one resample");
    }
    let mut rng = rng_from_seed(seed);
    let n = values.len();
    let mut resample = vec![0.0; n];
    let mut stats: Vec<f64> = (0..num_resamples)
        .map(|_| {
            for slot in resample.iter_mut() {
                *slot = values[rng.random_range(0..n)];
            }
            resample.sort_by(f64::total_cmp);
            iqm_sorted(&resample)
        })
        .collect();
    stats.sort_by(f64::total_cmp);
    let tail = (1.0 - confidence) / 2.0;
    Ok(AggregateSummary {
        iqm: point,
        ci_low: percentile(&stats, tail).min(point),
        ci_high: percentile(&stats, 1.0 - tail).max(point),
        num_bootstrap: num_resamples,
        confidence,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorrelationKind {
    Pearson,
    Spearman,
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::DegenerateInput("correlation of a constant series".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Ranks starting at 1, ties sharing their average rank.
fn ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut out = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}

/// Product-moment or rank correlation of two equally long series (at least 3 points).
pub fn correlation(x: &[f64], y: &[f64], kind: CorrelationKind) -> Result<f64> {
    if x.len() != y.len() {
        return invalid(format!("series lengths differ: {} vs {}", x.len(), y.len()));
    }
    if x.len() < 3 {
        return invalid("correlation needs at least 3 points");
    }
    if x.iter().chain(y).any(|v| v.is_nan()) {
        return invalid("correlation inputs contain NaN");
    }
    match kind {
        CorrelationKind::Pearson => {
            if x.iter().chain(y).any(|v| !v.is_finite()) {
                return invalid("pearson correlation needs finite inputs");
            }
            pearson(x, y)
        }
        CorrelationKind::Spearman => pearson(&ranks(x), &ranks(y)),
    }
}
