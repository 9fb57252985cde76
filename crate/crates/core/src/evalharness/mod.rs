//! Accuracy metrics, repeated-split evaluation, physical validity checks and
//! analytical baselines.

mod baseline;
mod metrics;
mod montecarlo;
mod report;
mod validity;

pub use baseline::{baseline_table, BaselineRow, Site, DEFAULT_FREQUENCY_MHZ};
pub use metrics::{mae, mape, mse, r2, Metrics, Stat};
pub use montecarlo::{monte_carlo_eval, MetricsReport, MonteCarloConfig, RunResult, ScoreOn};
pub use report::{read_metrics_csv, render_summary, write_metrics_csv, write_scatter_csv, MethodRow};
pub use validity::{
    check_validity, ProbeRanges, ValidityReport, VariableRoles, Verdict, MONOTONE_TOLERANCE, PROBE_POINTS,
};
