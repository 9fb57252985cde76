use serde::{Deserialize, Serialize};

use crate::{Error, Result};

fn check_lengths(pred: &[f64], y: &[f64]) -> Result<()> {
    if pred.len() != y.len() {
        return Err(Error::Shape { expected: y.len(), got: pred.len() });
    }
    if y.is_empty() {
        return Err(Error::Data("metrics need at least one sample".into()));
    }
    Ok(())
}

pub fn mae(pred: &[f64], y: &[f64]) -> Result<f64> {
    check_lengths(pred, y)?;
    Ok(pred.iter().zip(y).map(|(p, t)| (p - t).abs()).sum::<f64>() / y.len() as f64)
}

pub fn mse(pred: &[f64], y: &[f64]) -> Result<f64> {
    check_lengths(pred, y)?;
    Ok(pred.iter().zip(y).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / y.len() as f64)
}

/// Mean absolute percentage error, in percent.
pub fn mape(pred: &[f64], y: &[f64]) -> Result<f64> {
    check_lengths(pred, y)?;
    if y.contains(&0.0) {
        return Err(Error::Domain("mape: target contains a zero".into()));
    }
    Ok(100.0 * pred.iter().zip(y).map(|(p, t)| ((p - t) / t).abs()).sum::<f64>() / y.len() as f64)
}

pub fn r2(pred: &[f64], y: &[f64]) -> Result<f64> {
    check_lengths(pred, y)?;
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|t| (t - mean) * (t - mean)).sum();
    if ss_tot == 0.0 {
        return Err(Error::Domain("r2: target is constant".into()));
    }
    let ss_res: f64 = pred.iter().zip(y).map(|(p, t)| (t - p) * (t - p)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mae: f64,
    pub mse: f64,
    pub mape: f64,
    pub r2: f64,
}

impl Metrics {
    pub fn compute(pred: &[f64], y: &[f64]) -> Result<Metrics> {
        Ok(Metrics { mae: mae(pred, y)?, mse: mse(pred, y)?, mape: mape(pred, y)?, r2: r2(pred, y)? })
    }
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Stat {
        if values.is_empty() {
            return Stat { mean: f64::NAN, std: f64::NAN };
        }
        // summation rounding would otherwise give identical runs a tiny spread
        if values.iter().all(|v| v.to_bits() == values[0].to_bits()) {
            return Stat::exact(values[0]);
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Stat { mean, std: var.sqrt() }
    }

    pub fn exact(v: f64) -> Stat {
        Stat { mean: v, std: 0.0 }
    }
}
