use serde::{Deserialize, Serialize};

use super::metrics::Metrics;
use crate::plmodels::{
    eval_fs, eval_indoor_empirical, eval_mwf, eval_outdoor_empirical, Dataset, IndoorParams, OutdoorParams,
};
use crate::{Error, Result};

/// Carrier used for the free-space baseline when the data has no frequency column.
pub const DEFAULT_FREQUENCY_MHZ: f64 = 868.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Site {
    Indoor,
    Outdoor,
}

impl std::str::FromStr for Site {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "indoor" => Ok(Site::Indoor),
            "outdoor" => Ok(Site::Outdoor),
            other => Err(Error::Config(format!("unknown site '{other}', expected indoor or outdoor"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub method: String,
    pub metrics: Metrics,
    #[serde(skip)]
    pub predictions: Vec<f64>,
}

fn column(ds: &Dataset, names: &[&str]) -> Result<usize> {
    names
        .iter()
        .find_map(|n| ds.feature_index(n))
        .ok_or_else(|| Error::Data(format!("dataset has none of the columns {names:?}")))
}

/// Full-dataset metrics of the analytical models for a measurement site.
/// Indoor needs `d` (m), `n_w`, `n_f`; outdoor needs `d` (m) and `h_ed` (m),
/// plus an optional `f` in MHz. Shadow terms are zero.
pub fn baseline_table(ds: &Dataset, site: Site) -> Result<Vec<BaselineRow>> {
    let raw = ds.denormalized();
    let d = column(&raw, &["d", "d_m"])?;
    let mut rows = Vec::new();
    match site {
        Site::Indoor => {
            let w = column(&raw, &["n_w", "walls"])?;
            let fl = column(&raw, &["n_f", "floors"])?;
            let params: Vec<IndoorParams> =
                raw.rows.iter().map(|r| IndoorParams { d_m: r[d], n_walls: r[w], n_floors: r[fl] }).collect();
            let mwf = params.iter().map(eval_mwf).collect::<Result<Vec<_>>>()?;
            let ei = params.iter().map(eval_indoor_empirical).collect::<Result<Vec<_>>>()?;
            rows.push(("MWF", mwf));
            rows.push(("EI", ei));
        }
        Site::Outdoor => {
            let h = column(&raw, &["h_ed", "h"])?;
            let f = column(&raw, &["f", "f_mhz"]).ok();
            let fs = raw
                .rows
                .iter()
                .map(|r| eval_fs(f.map_or(DEFAULT_FREQUENCY_MHZ, |j| r[j]), r[d] / 1000.0))
                .collect::<Result<Vec<_>>>()?;
            let eo = raw
                .rows
                .iter()
                .map(|r| eval_outdoor_empirical(&OutdoorParams { d_m: r[d], h_ed_m: r[h], x_sigma: 0.0 }))
                .collect::<Result<Vec<_>>>()?;
            rows.push(("FS", fs));
            rows.push(("EO", eo));
        }
    }
    rows.into_iter()
        .map(|(method, pred)| {
            Ok(BaselineRow { method: method.into(), metrics: Metrics::compute(&pred, &raw.target)?, predictions: pred })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plmodels::Provenance;

    #[test]
    fn indoor_rows_against_own_model_are_exact() {
        let rows: Vec<Vec<f64>> =
            (0..30).map(|i| vec![6.5 + i as f64 * 3.0, (i % 4) as f64, 1.0 + (i % 3) as f64]).collect();
        let target: Vec<f64> = rows
            .iter()
            .map(|r| eval_indoor_empirical(&IndoorParams { d_m: r[0], n_walls: r[1], n_floors: r[2] }).unwrap())
            .collect();
        let ds = Dataset::new(
            vec!["d".into(), "n_w".into(), "n_f".into()],
            rows,
            target,
            Provenance::File { path: "mem".into() },
        )
        .unwrap();
        let t = baseline_table(&ds, Site::Indoor).unwrap();
        assert_eq!(t[0].method, "MWF");
        assert_eq!(t[1].metrics.mae, 0.0);
        assert!(t[0].metrics.mae > 0.0);
    }

    #[test]
    fn missing_columns() {
        let ds = Dataset::new(
            vec!["d".into()],
            vec![vec![1.0], vec![2.0]],
            vec![1.0, 2.0],
            Provenance::File { path: "mem".into() },
        )
        .unwrap();
        assert!(matches!(baseline_table(&ds, Site::Outdoor), Err(Error::Data(_))));
    }
}
