use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{Metrics, Stat};
use crate::plmodels::{split, Dataset};
use crate::{Error, Result};

/// Which rows each run is scored on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreOn {
    /// The held-out part of each split.
    #[default]
    Test,
    /// The whole dataset, as for fixed analytical baselines.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloConfig {
    pub runs: usize,
    pub train_fraction: f64,
    pub base_seed: u64,
    #[serde(default)]
    pub score_on: ScoreOn,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        MonteCarloConfig { runs: 10, train_fraction: 0.8, base_seed: 0, score_on: ScoreOn::Test }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub run: usize,
    pub seed: u64,
    pub metrics: Option<Metrics>,
    pub error: Option<String>,
    /// (true, predicted) pairs on the scored rows.
    #[serde(skip)]
    pub pairs: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mae: Stat,
    pub mse: Stat,
    pub mape: Stat,
    pub r2: Stat,
    /// Successful runs aggregated into the statistics.
    pub n_runs: usize,
    pub runs: Vec<RunResult>,
}

impl MetricsReport {
    /// Aggregates the successful runs. Errors if at least half failed.
    pub fn aggregate(runs: Vec<RunResult>) -> Result<MetricsReport> {
        let ok: Vec<Metrics> = runs.iter().filter_map(|r| r.metrics).collect();
        let failed = runs.len() - ok.len();
        if runs.is_empty() || 2 * failed >= runs.len() {
            let first = runs.iter().find_map(|r| r.error.clone()).unwrap_or_default();
            return Err(Error::Training(format!("{failed} of {} runs failed; first error: {first}", runs.len())));
        }
        let col = |f: fn(&Metrics) -> f64| Stat::of(&ok.iter().map(f).collect::<Vec<_>>());
        Ok(MetricsReport {
            mae: col(|m| m.mae),
            mse: col(|m| m.mse),
            mape: col(|m| m.mape),
            r2: col(|m| m.r2),
            n_runs: ok.len(),
            runs,
        })
    }

    /// One deterministic evaluation reported with zero spread.
    pub fn single(metrics: Metrics, pairs: Vec<(f64, f64)>) -> MetricsReport {
        MetricsReport {
            mae: Stat::exact(metrics.mae),
            mse: Stat::exact(metrics.mse),
            mape: Stat::exact(metrics.mape),
            r2: Stat::exact(metrics.r2),
            n_runs: 1,
            runs: vec![RunResult { run: 0, seed: 0, metrics: Some(metrics), error: None, pairs }],
        }
    }
}

/// Repeated random-split evaluation. `fit(train, scored, seed)` trains on
/// `train` and returns predictions for `scored`. Run `i` splits with seed
/// `base_seed + i`; runs execute in parallel but results are keyed by index,
/// so the report does not depend on the worker count.
pub fn monte_carlo_eval<F>(ds: &Dataset, cfg: &MonteCarloConfig, fit: F) -> Result<MetricsReport>
where
    F: Fn(&Dataset, &Dataset, u64) -> Result<Vec<f64>> + Sync,
{
    if cfg.runs == 0 {
        return Err(Error::Config("runs must be >= 1".into()));
    }
    let runs: Vec<RunResult> = (0..cfg.runs)
        .into_par_iter()
        .map(|i| {
            let seed = cfg.base_seed.wrapping_add(i as u64);
            let outcome = split(ds, cfg.train_fraction, seed).and_then(|(train, test)| {
                let scored = match cfg.score_on {
                    ScoreOn::Test => test,
                    ScoreOn::Full => ds.clone(),
                };
                let pred = fit(&train, &scored, seed)?;
                let m = Metrics::compute(&pred, &scored.target)?;
                Ok((m, scored.target.iter().copied().zip(pred).collect()))
            });
            match outcome {
                Ok((m, pairs)) => RunResult { run: i, seed, metrics: Some(m), error: None, pairs },
                Err(e) => RunResult { run: i, seed, metrics: None, error: Some(e.to_string()), pairs: Vec::new() },
            }
        })
        .collect();
    MetricsReport::aggregate(runs)
}
