use serde::{Deserialize, Serialize};

use crate::expr::ExpressionTree;
use crate::plmodels::Dataset;
use crate::{Error, Result};

/// Points in each monotonicity sweep.
pub const PROBE_POINTS: usize = 200;
/// Largest per-step decrease (dB) still counted as non-decreasing.
pub const MONOTONE_TOLERANCE: f64 = -1e-6;

/// Which feature columns carry the physical distance and frequency.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct VariableRoles {
    pub distance: Option<usize>,
    pub frequency: Option<usize>,
}

impl VariableRoles {
    /// Recognises `d`, `d_m`, `d_km`, `distance` and `f`, `f_hz`, `f_ghz`,
    /// `f_mhz`, `frequency`.
    pub fn from_names(names: &[String]) -> Self {
        let find = |cands: &[&str]| names.iter().position(|n| cands.contains(&n.to_ascii_lowercase().as_str()));
        VariableRoles {
            distance: find(&["d", "d_m", "d_km", "distance"]),
            frequency: find(&["f", "f_hz", "f_ghz", "f_mhz", "frequency"]),
        }
    }
}

/// Per-feature sweep ranges and the values other features are held at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRanges {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub median: Vec<f64>,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

impl ProbeRanges {
    /// Ranges over the raw (denormalised) feature values.
    pub fn from_dataset(ds: &Dataset) -> Self {
        let raw = ds.denormalized();
        let mut out = ProbeRanges { min: Vec::new(), max: Vec::new(), median: Vec::new() };
        for j in 0..raw.n_features() {
            let col = raw.column(j);
            out.min.push(col.iter().copied().fold(f64::INFINITY, f64::min));
            out.max.push(col.iter().copied().fold(f64::NEG_INFINITY, f64::max));
            out.median.push(median(col));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Valid,
    Invalid,
    /// Neither distance nor frequency is a feature of the dataset.
    NotApplicable,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Valid => "valid",
            Verdict::Invalid => "invalid",
            Verdict::NotApplicable => "not_applicable",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidityReport {
    pub uses_distance: Option<bool>,
    pub uses_frequency: Option<bool>,
    pub monotone_in_distance: Option<bool>,
    pub monotone_in_frequency: Option<bool>,
    /// Subset of {"distance", "frequency"} appearing under sin/cos.
    pub oscillatory_over: Vec<String>,
    pub verdict: Verdict,
    pub diagnostics: Vec<String>,
}

struct Probe {
    monotone: bool,
    note: Option<String>,
}

fn probe(e: &ExpressionTree, var: usize, r: &ProbeRanges) -> Probe {
    let (lo, hi) = (r.min[var], r.max[var]);
    let rows: Vec<Vec<f64>> = (0..PROBE_POINTS)
        .map(|i| {
            let t = i as f64 / (PROBE_POINTS - 1) as f64;
            let mut row = r.median.clone();
            row[var] = lo + t * (hi - lo);
            row
        })
        .collect();
    let out = e.evaluate(&rows).expect("row width checked by caller");
    let bad = out.iter().filter(|v| !v.is_finite()).count();
    if 2 * bad > out.len() {
        return Probe { monotone: false, note: Some(format!("{bad} of {} probe outputs are non-finite", out.len())) };
    }
    for w in out.windows(2) {
        if w[0].is_finite() && w[1].is_finite() && w[1] - w[0] < MONOTONE_TOLERANCE {
            return Probe { monotone: false, note: Some(format!("decreases from {} to {}", w[0], w[1])) };
        }
    }
    Probe { monotone: true, note: None }
}

/// Structural and numerical physical-validity check of a pathloss expression.
pub fn check_validity(e: &ExpressionTree, roles: &VariableRoles, ranges: &ProbeRanges) -> Result<ValidityReport> {
    if e.min_features() > ranges.median.len() {
        return Err(Error::Shape { expected: e.min_features(), got: ranges.median.len() });
    }
    let scan = e.structural_scan();
    let mut report = ValidityReport {
        uses_distance: None,
        uses_frequency: None,
        monotone_in_distance: None,
        monotone_in_frequency: None,
        oscillatory_over: Vec::new(),
        verdict: Verdict::NotApplicable,
        diagnostics: Vec::new(),
    };
    let mut valid = true;
    for (role, idx) in [("distance", roles.distance), ("frequency", roles.frequency)] {
        let Some(j) = idx else { continue };
        let used = scan.variables_used.contains(&j);
        if !used {
            report.diagnostics.push(format!("{role} does not appear"));
        }
        if scan.trig_over.contains(&j) {
            report.oscillatory_over.push(role.to_string());
            report.diagnostics.push(format!("{role} appears under sin/cos"));
        }
        let p = probe(e, j, ranges);
        if let Some(note) = p.note {
            report.diagnostics.push(format!("{role}: {note}"));
        }
        valid &= used && !scan.trig_over.contains(&j) && p.monotone;
        if role == "distance" {
            report.uses_distance = Some(used);
            report.monotone_in_distance = Some(p.monotone);
        } else {
            report.uses_frequency = Some(used);
            report.monotone_in_frequency = Some(p.monotone);
        }
    }
    if roles.distance.is_some() || roles.frequency.is_some() {
        report.verdict = if valid { Verdict::Valid } else { Verdict::Invalid };
    }
    Ok(report)
}
