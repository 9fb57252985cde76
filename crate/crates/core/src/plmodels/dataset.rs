//! Tabular pathloss datasets: CSV I/O, max-normalization and train/test splits.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Name of the target column in dataset CSV files.
pub const TARGET_COLUMN: &str = "pl_db";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Abg,
    Ci,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModelKind::Abg => f.write_str("abg"),
            ModelKind::Ci => f.write_str("ci"),
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "abg" => Ok(ModelKind::Abg),
            "ci" => Ok(ModelKind::Ci),
            other => Err(Error::Config(format!("unknown model kind '{other}' (expected abg|ci)"))),
        }
    }
}

/// Where a dataset's rows came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Provenance {
    Synthetic {
        model: ModelKind,
        seed: u64,
        /// Sampling law used for every parameter range.
        sampling: String,
    },
    File {
        path: String,
    },
    Subset {
        parent: Box<Provenance>,
        note: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    /// Row-major feature matrix.
    pub rows: Vec<Vec<f64>>,
    /// Pathloss in dB, one per row.
    pub target: Vec<f64>,
    pub provenance: Provenance,
    /// Per-feature divisor applied by [`normalize_max`], if any.
    pub norm: Option<Vec<f64>>,
}

impl Dataset {
    pub fn new(
        feature_names: Vec<String>,
        rows: Vec<Vec<f64>>,
        target: Vec<f64>,
        provenance: Provenance,
    ) -> Result<Self> {
        let ds = Dataset { feature_names, rows, target, provenance, norm: None };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows.len() != self.target.len() {
            return Err(Error::Data(format!("{} feature rows but {} targets", self.rows.len(), self.target.len())));
        }
        let width = self.feature_names.len();
        for (i, row) in self.rows.iter().enumerate() {
            if row.len() != width {
                return Err(Error::Shape { expected: width, got: row.len() });
            }
            if let Some(v) = row.iter().find(|v| !v.is_finite()) {
                return Err(Error::Data(format!("row {i} has non-finite feature {v}")));
            }
        }
        if let Some(i) = self.target.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("row {i} has non-finite target")));
        }
        if let Some(norm) = &self.norm {
            if norm.len() != width {
                return Err(Error::Shape { expected: width, got: norm.len() });
            }
            if norm.iter().any(|m| !(m.is_finite() && *m > 0.0)) {
                return Err(Error::Data("normalization maxima must be finite and > 0".into()));
            }
        }
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    /// Rows taken in the given order.
    pub fn subset(&self, indices: &[usize], note: &str) -> Dataset {
        Dataset {
            feature_names: self.feature_names.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            target: indices.iter().map(|&i| self.target[i]).collect(),
            provenance: Provenance::Subset { parent: Box::new(self.provenance.clone()), note: note.to_string() },
            norm: self.norm.clone(),
        }
    }

    /// Features in original units, undoing any stored normalization.
    pub fn raw_rows(&self) -> Vec<Vec<f64>> {
        match &self.norm {
            None => self.rows.clone(),
            Some(norm) => self.rows.iter().map(|r| r.iter().zip(norm).map(|(v, m)| v * m).collect()).collect(),
        }
    }

    pub fn denormalized(&self) -> Dataset {
        Dataset { rows: self.raw_rows(), norm: None, ..self.clone() }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<&str> = self.feature_names.iter().map(String::as_str).collect();
        header.push(TARGET_COLUMN);
        w.write_record(&header)?;
        for (row, y) in self.rows.iter().zip(&self.target) {
            let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            rec.push(y.to_string());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    /// Reads a dataset CSV whose last column is the `pl_db` target. A
    /// `<stem>.norm.json` sidecar next to the file is picked up if present.
    pub fn read_csv(path: &Path) -> Result<Dataset> {
        let mut r = csv::Reader::from_path(path).map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => Error::Data(format!("cannot open {}: {e}", path.display())),
            _ => Error::from(e),
        })?;
        let headers: Vec<String> = r.headers()?.iter().map(|s| s.trim().to_string()).collect();
        let target_idx = headers
            .iter()
            .position(|h| h == TARGET_COLUMN)
            .ok_or_else(|| Error::Data(format!("{} has no '{TARGET_COLUMN}' column", path.display())))?;
        let feature_names: Vec<String> =
            headers.iter().enumerate().filter(|(i, _)| *i != target_idx).map(|(_, h)| h.clone()).collect();
        let mut rows = Vec::new();
        let mut target = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let mut row = Vec::with_capacity(feature_names.len());
            for (i, cell) in rec.iter().enumerate() {
                let v: f64 = cell
                    .trim()
                    .parse()
                    .map_err(|_| Error::Data(format!("{}:{}: cannot parse '{cell}'", path.display(), line + 2)))?;
                if i == target_idx {
                    target.push(v);
                } else {
                    row.push(v);
                }
            }
            rows.push(row);
        }
        let mut ds = Dataset::new(feature_names, rows, target, Provenance::File { path: path.display().to_string() })?;
        let sidecar = norm_sidecar_path(path);
        if sidecar.exists() {
            let meta = NormSidecar::read(&sidecar)?;
            if meta.feature_names != ds.feature_names {
                return Err(Error::Data(format!("{} does not match dataset columns", sidecar.display())));
            }
            ds.norm = Some(meta.maxima);
            ds.validate()?;
        }
        Ok(ds)
    }
}

/// Normalization metadata stored next to a dataset CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormSidecar {
    pub feature_names: Vec<String>,
    pub maxima: Vec<f64>,
}

impl NormSidecar {
    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub fn norm_sidecar_path(csv_path: &Path) -> std::path::PathBuf {
    let stem = csv_path.file_stem().and_then(|s| s.to_str()).unwrap_or("dataset");
    csv_path.with_file_name(format!("{stem}.norm.json"))
}

/// Divides every feature by its largest magnitude and records the divisors.
///
/// The divisor is `max |x|` so that all-negative columns keep their sign and
/// land in `[-1, 0)`. Applying this to an already-normalized dataset is the
/// identity, and the stored divisors compose.
pub fn normalize_max(ds: &Dataset) -> Result<Dataset> {
    let width = ds.n_features();
    let mut maxima = vec![0.0f64; width];
    for row in &ds.rows {
        for (m, v) in maxima.iter_mut().zip(row) {
            *m = m.max(v.abs());
        }
    }
    if let Some(j) = maxima.iter().position(|m| *m == 0.0) {
        return Err(Error::Data(format!(
            "cannot normalize column '{}': maximum magnitude is zero",
            ds.feature_names[j]
        )));
    }
    let rows = ds.rows.iter().map(|r| r.iter().zip(&maxima).map(|(v, m)| v / m).collect()).collect();
    let norm = match &ds.norm {
        Some(prev) => prev.iter().zip(&maxima).map(|(p, m)| p * m).collect(),
        None => maxima,
    };
    let out = Dataset { rows, norm: Some(norm), ..ds.clone() };
    out.validate()?;
    Ok(out)
}

/// Random train/test partition. The first `ceil(fraction * n)` rows of a
/// seeded permutation go to the training set.
pub fn split(ds: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!("train fraction must be in (0, 1), got {train_fraction}")));
    }
    let n = ds.n_rows();
    if n < 2 {
        return Err(Error::Data(format!("cannot split a dataset of {n} rows")));
    }
    let n_train = (train_fraction * n as f64).ceil() as usize;
    if n_train == 0 || n_train >= n {
        return Err(Error::Data(format!("split of {n} rows at fraction {train_fraction} leaves an empty partition")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    let train = ds.subset(&idx[..n_train], &format!("train split seed={seed}"));
    let test = ds.subset(&idx[n_train..], &format!("test split seed={seed}"));
    Ok((train, test))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ColumnRole {
    Target,
    /// Keep as a feature, optionally under a new name.
    Feature(Option<String>),
    Ignore,
}

/// Column-name to role map for empirical CSV ingestion.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Schema {
    pub columns: Vec<(String, ColumnRole)>,
}

impl Schema {
    /// Parses `name=role,...`. Roles are `target`, `feature`, `ignore`, or any
    /// other word, which keeps the column as a feature renamed to that word.
    pub fn parse(spec: &str) -> Result<Self> {
        let mut columns = Vec::new();
        for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (name, role) =
                item.split_once('=').ok_or_else(|| Error::Config(format!("schema entry '{item}' is not name=role")))?;
            let role = match role.trim() {
                "target" => ColumnRole::Target,
                "feature" => ColumnRole::Feature(None),
                "ignore" => ColumnRole::Ignore,
                alias => ColumnRole::Feature(Some(alias.to_string())),
            };
            columns.push((name.trim().to_string(), role));
        }
        let schema = Schema { columns };
        schema.check()?;
        Ok(schema)
    }

    fn check(&self) -> Result<()> {
        let targets = self.columns.iter().filter(|(_, r)| *r == ColumnRole::Target).count();
        if targets != 1 {
            return Err(Error::Config(format!("schema must map exactly one target column, got {targets}")));
        }
        if !self.columns.iter().any(|(_, r)| matches!(r, ColumnRole::Feature(_))) {
            return Err(Error::Config("schema maps no feature columns".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct LoadReport {
    pub read: usize,
    pub kept: usize,
    pub dropped: usize,
}

/// Loads a measurement CSV with arbitrary headers. Rows with an unparsable or
/// non-finite value in any mapped column are dropped and counted.
pub fn load_empirical_csv(path: &Path, schema: &Schema) -> Result<(Dataset, LoadReport)> {
    schema.check()?;
    if !path.exists() {
        return Err(Error::Data(format!("{} does not exist", path.display())));
    }
    let mut r = csv::Reader::from_path(path)?;
    let headers: HashMap<String, usize> =
        r.headers()?.iter().enumerate().map(|(i, h)| (h.trim().to_string(), i)).collect();

    let mut target_col = None;
    let mut feature_cols = Vec::new();
    let mut feature_names = Vec::new();
    for (name, role) in &schema.columns {
        if *role == ColumnRole::Ignore {
            continue;
        }
        let idx =
            *headers.get(name).ok_or_else(|| Error::Data(format!("{} has no column '{name}'", path.display())))?;
        match role {
            ColumnRole::Target => target_col = Some(idx),
            ColumnRole::Feature(alias) => {
                feature_cols.push(idx);
                feature_names.push(alias.clone().unwrap_or_else(|| name.clone()));
            }
            ColumnRole::Ignore => unreachable!(),
        }
    }
    let target_col = target_col.expect("schema checked");

    let parse =
        |s: Option<&str>| -> Option<f64> { s.and_then(|c| c.trim().parse::<f64>().ok()).filter(|v| v.is_finite()) };
    let mut report = LoadReport::default();
    let mut rows = Vec::new();
    let mut target = Vec::new();
    for rec in r.records() {
        report.read += 1;
        let Ok(rec) = rec else {
            report.dropped += 1;
            continue;
        };
        let y = parse(rec.get(target_col));
        let row: Option<Vec<f64>> = feature_cols.iter().map(|&c| parse(rec.get(c))).collect();
        match (y, row) {
            (Some(y), Some(row)) => {
                rows.push(row);
                target.push(y);
            }
            _ => report.dropped += 1,
        }
    }
    report.kept = rows.len();
    if rows.is_empty() {
        return Err(Error::Data(format!(
            "{}: no usable rows after dropping {} bad rows",
            path.display(),
            report.dropped
        )));
    }
    let ds = Dataset::new(feature_names, rows, target, Provenance::File { path: path.display().to_string() })?;
    Ok((ds, report))
}
