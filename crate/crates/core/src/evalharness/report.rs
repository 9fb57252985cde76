use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::Stat;
use super::montecarlo::MetricsReport;
use super::validity::Verdict;
use crate::{Error, Result};

/// One line of a results table: a method's aggregated metrics plus the
/// expression it produced and that expression's validity, when any.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRow {
    pub method: String,
    pub report: MetricsReport,
    pub expression: Option<String>,
    pub validity: Option<Verdict>,
}

const HEADER: [&str; 12] = [
    "method",
    "mae_mean",
    "mae_std",
    "mse_mean",
    "mse_std",
    "mape_mean",
    "mape_std",
    "r2_mean",
    "r2_std",
    "n_runs",
    "expression",
    "validity",
];

pub fn write_metrics_csv(path: &Path, rows: &[MethodRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    w.write_record(HEADER)?;
    for r in rows {
        let m = &r.report;
        let mut rec = vec![r.method.clone()];
        for s in [m.mae, m.mse, m.mape, m.r2] {
            rec.push(s.mean.to_string());
            rec.push(s.std.to_string());
        }
        rec.push(m.n_runs.to_string());
        rec.push(r.expression.clone().unwrap_or_default());
        rec.push(r.validity.map(|v| v.to_string()).unwrap_or_default());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MethodRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Parse(format!("{}: bad number in column {}", path.display(), HEADER[i])))
        };
        let stat = |i: usize| -> Result<Stat> { Ok(Stat { mean: num(i)?, std: num(i + 1)? }) };
        let text = |i: usize| rec.get(i).filter(|s| !s.is_empty()).map(str::to_string);
        let validity = match rec.get(11).unwrap_or("") {
            "valid" => Some(Verdict::Valid),
            "invalid" => Some(Verdict::Invalid),
            "not_applicable" => Some(Verdict::NotApplicable),
            _ => None,
        };
        out.push(MethodRow {
            method: rec.get(0).unwrap_or("").to_string(),
            report: MetricsReport {
                mae: stat(1)?,
                mse: stat(3)?,
                mape: stat(5)?,
                r2: stat(7)?,
                n_runs: num(9)? as usize,
                runs: Vec::new(),
            },
            expression: text(10),
            validity,
        });
    }
    Ok(out)
}

fn pm(s: Stat) -> String {
    format!("{:.2} ± {:.2}", s.mean, s.std)
}

/// Plain-text table: method, MAE, MSE, MAPE, R² (mean ± std), then the
/// expression and its validity on a second line.
pub fn render_summary(title: &str, rows: &[MethodRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{title}");
    let _ = writeln!(s, "{:<22} {:>18} {:>22} {:>16} {:>14}", "method", "MAE (dB)", "MSE (dB^2)", "MAPE (%)", "R2");
    for r in rows {
        let m = &r.report;
        let _ = writeln!(s, "{:<22} {:>18} {:>22} {:>16} {:>14}", r.method, pm(m.mae), pm(m.mse), pm(m.mape), pm(m.r2));
        if let Some(e) = &r.expression {
            let v = r.validity.map(|v| v.to_string()).unwrap_or_else(|| "-".into());
            let _ = writeln!(s, "    expression [{v}]: {e}");
        }
    }
    s
}

/// `method,run,y_true,y_pred` rows for scatter plots.
pub fn write_scatter_csv(path: &Path, rows: &[MethodRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    w.write_record(["method", "run", "y_true", "y_pred"])?;
    for r in rows {
        for run in &r.report.runs {
            for (t, p) in &run.pairs {
                w.write_record([r.method.clone(), run.run.to_string(), t.to_string(), p.to_string()])?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}
