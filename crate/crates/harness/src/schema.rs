//! Column sets of every CSV the harness writes.

use serde::{Deserialize, Serialize};

pub const METRIC_COLUMNS: &[&str] = &["metric_name", "task", "method", "checkpoint", "value"];

pub const TRACE_COLUMNS: &[&str] = &[
    "iteration",
    "disagreement",
    "max_alpha",
    "max_state_kl_sym",
    "err_run1",
    "err_run2",
    "thm2_bound_run1",
    "thm2_bound_run2",
];

pub const LOG_COLUMNS: &[&str] = &["step", "disagreement_mean", "alpha_mean", "alpha_max_state", "return_greedy", "return_soft"];

pub const SNAPSHOT_COLUMNS: &[&str] = &["step", "grid_point", "q1", "q2", "q_min", "policy_density", "alpha"];

pub const CORRELATION_COLUMNS: &[&str] = &["mdp_index", "early_disagreement", "q1_dispersion"];

pub const THM1_COLUMNS: &[&str] = &[
    "seed",
    "tuple",
    "num_actions",
    "kappa",
    "disagreement",
    "alpha",
    "kl_forward",
    "kl_reverse",
    "kl_symmetric",
    "bound",
    "satisfied",
];

pub const THM2_SUMMARY_COLUMNS: &[&str] = &[
    "seed",
    "mdp",
    "num_states",
    "num_actions",
    "discount",
    "kappa",
    "initial_disagreement",
    "max_bound_excess",
    "max_contraction_excess",
    "max_kl_ratio",
    "violations",
];

pub const COUPLED_SUMMARY_COLUMNS: &[&str] = &[
    "seed",
    "mdp",
    "initial_disagreement",
    "final_error_run1",
    "final_error_run2",
    "bias_bound",
    "max_bound_excess",
    "max_contraction_excess",
];

pub const SUMMARY_COLUMNS: &[&str] = &[
    "task",
    "method",
    "k",
    "metric_name",
    "checkpoint",
    "n",
    "estimator",
    "value",
    "ci_low",
    "ci_high",
    "spearman_k_v",
];

pub const SCATTER_COLUMNS: &[&str] = &["run", "mdp_index", "early_disagreement", "q1_dispersion"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thm1Row {
    pub seed: u64,
    pub tuple: usize,
    pub num_actions: usize,
    pub kappa: f64,
    pub disagreement: f64,
    pub alpha: f64,
    pub kl_forward: f64,
    pub kl_reverse: f64,
    pub kl_symmetric: f64,
    pub bound: f64,
    pub satisfied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thm2SummaryRow {
    pub seed: u64,
    pub mdp: usize,
    pub num_states: usize,
    pub num_actions: usize,
    pub discount: f64,
    pub kappa: f64,
    pub initial_disagreement: f64,
    pub max_bound_excess: f64,
    pub max_contraction_excess: f64,
    pub max_kl_ratio: f64,
    pub violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoupledSummaryRow {
    pub seed: u64,
    pub mdp: usize,
    pub initial_disagreement: f64,
    pub final_error_run1: f64,
    pub final_error_run2: f64,
    pub bias_bound: f64,
    pub max_bound_excess: f64,
    pub max_contraction_excess: f64,
}

/// One aggregated row of `summary.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryCsvRow {
    pub task: String,
    pub method: String,
    /// QED k of the method; `inf` for the baseline, empty when not a QED method.
    pub k: Option<f64>,
    pub metric_name: String,
    pub checkpoint: u64,
    pub n: usize,
    /// `iqm` with a bootstrap interval, or `mean` with `[min, max]` below 4 values.
    pub estimator: String,
    pub value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Rank correlation of k and V over the task's finite-k methods.
    pub spearman_k_v: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterRow {
    pub run: String,
    pub mdp_index: usize,
    pub early_disagreement: f64,
    pub q1_dispersion: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use qedlab_core::coupled::TraceRow;
    use qedlab_core::metrics::MetricRow;
    use qedlab_core::tabular::{CorrelationPoint, LogRow};
    use qedlab_core::toy::SnapshotRow;

    fn header_of<T: Serialize>(row: &T) -> Vec<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.serialize(row).unwrap();
        let text = String::from_utf8(w.into_inner().unwrap()).unwrap();
        text.lines().next().unwrap().split(',').map(str::to_string).collect()
    }

    fn same(row_header: Vec<String>, declared: &[&str]) {
        assert_eq!(row_header, declared.iter().map(|s| s.to_string()).collect::<Vec<_>>());
    }

    #[test]
    fn declared_columns_match_row_types() {
        same(
            header_of(&MetricRow {
                metric_name: "m".into(),
                task: "t".into(),
                method: "x".into(),
                checkpoint: 0,
                value: 0.0,
            }),
            METRIC_COLUMNS,
        );
        same(
            header_of(&TraceRow {
                iteration: 0,
                disagreement: 0.0,
                max_alpha: 0.0,
                max_state_kl_sym: 0.0,
                err_run1: 0.0,
                err_run2: 0.0,
                thm2_bound_run1: 0.0,
                thm2_bound_run2: 0.0,
            }),
            TRACE_COLUMNS,
        );
        same(
            header_of(&LogRow {
                step: 0,
                disagreement_mean: 0.0,
                alpha_mean: 0.0,
                alpha_max_state: 0.0,
                return_greedy: 0.0,
                return_soft: 0.0,
            }),
            LOG_COLUMNS,
        );
        same(
            header_of(&SnapshotRow {
                step: 0,
                grid_point: 0.0,
                q1: 0.0,
                q2: 0.0,
                q_min: 0.0,
                policy_density: 0.0,
                alpha: 0.0,
            }),
            SNAPSHOT_COLUMNS,
        );
        same(
            header_of(&CorrelationPoint {
                mdp_index: 0,
                early_disagreement: 0.0,
                q1_dispersion: 0.0,
            }),
            CORRELATION_COLUMNS,
        );
        same(
            header_of(&Thm1Row {
                seed: 0,
                tuple: 0,
                num_actions: 2,
                kappa: 1.0,
                disagreement: 0.0,
                alpha: 1.0,
                kl_forward: 0.0,
                kl_reverse: 0.0,
                kl_symmetric: 0.0,
                bound: 2.0,
                satisfied: true,
            }),
            THM1_COLUMNS,
        );
        same(
            header_of(&Thm2SummaryRow {
                seed: 0,
                mdp: 0,
                num_states: 1,
                num_actions: 1,
                discount: 0.9,
                kappa: 1.0,
                initial_disagreement: 0.0,
                max_bound_excess: 0.0,
                max_contraction_excess: 0.0,
                max_kl_ratio: 0.0,
                violations: 0,
            }),
            THM2_SUMMARY_COLUMNS,
        );
        same(
            header_of(&CoupledSummaryRow {
                seed: 0,
                mdp: 0,
                initial_disagreement: 0.0,
                final_error_run1: 0.0,
                final_error_run2: 0.0,
                bias_bound: 0.0,
                max_bound_excess: 0.0,
                max_contraction_excess: 0.0,
            }),
            COUPLED_SUMMARY_COLUMNS,
        );
        same(
            header_of(&SummaryCsvRow {
                task: "t".into(),
                method: "m".into(),
                k: None,
                metric_name: "v".into(),
                checkpoint: 0,
                n: 1,
                estimator: "mean".into(),
                value: 0.0,
                ci_low: 0.0,
                ci_high: 0.0,
                spearman_k_v: None,
            }),
            SUMMARY_COLUMNS,
        );
        same(
            header_of(&ScatterRow {
                run: "r".into(),
                mdp_index: 0,
                early_disagreement: 0.0,
                q1_dispersion: 0.0,
            }),
            SCATTER_COLUMNS,
        );
    }
}
