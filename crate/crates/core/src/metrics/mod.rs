//! Divergence, dispersion and aggregation statistics.

mod aggregate;
mod divergence;
mod expectile;
mod variability;

pub use aggregate::{
    correlation, iqm, iqm_with_bootstrap, percentile, AggregateSummary, CorrelationKind, MetricRow,
    SummaryRow,
};
pub use divergence::{
    kl_categorical, kl_diag_gaussian, symmetric_kl_categorical, symmetric_kl_diag_gaussian,
    DiagGaussian, LOG_STD_MAX, LOG_STD_MIN,
};
pub use expectile::{expectile, weighted_expectile, EXPECTILE_TOL};
pub use variability::{
    cumulative_action_distance, inter_run_variability, inter_run_variability_detailed,
    ActionDistribution, Divergence, EvalStateSet, Policy, Variability,
};
