use crate::expr::{optimize_constants, repeat_penalty, Columns, ConstraintSet, ExpressionTree};
use crate::{Error, Result};

/// Population standard deviation; errors when the target is constant.
pub fn target_std(y: &[f64]) -> Result<f64> {
    if y.is_empty() {
        return Err(Error::Data("empty target".into()));
    }
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let sd = (y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
    if !(sd > 0.0) {
        return Err(Error::Data("target has zero variance".into()));
    }
    Ok(sd)
}

/// Root-mean-square error divided by the population std of `y`.
pub fn nrmse(pred: &[f64], y: &[f64]) -> Result<f64> {
    if pred.len() != y.len() {
        return Err(Error::Shape { expected: y.len(), got: pred.len() });
    }
    let sd = target_std(y)?;
    let mse = pred.iter().zip(y).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / y.len() as f64;
    Ok(mse.sqrt() / sd)
}

/// Reward of an expression with fitted constants.
#[derive(Debug, Clone, PartialEq)]
pub struct Scored {
    pub reward: f64,
    pub constants: Vec<f64>,
}

/// Precomputed training data for repeated reward evaluation.
#[derive(Debug, Clone)]
pub struct RewardData {
    pub x: Columns,
    pub y: Vec<f64>,
    pub sd: f64,
}

impl RewardData {
    pub fn new(rows: &[Vec<f64>], y: &[f64]) -> Result<Self> {
        if rows.len() != y.len() {
            return Err(Error::Shape { expected: y.len(), got: rows.len() });
        }
        Ok(RewardData { x: Columns::from_rows(rows), sd: target_std(y)?, y: y.to_vec() })
    }
}

/// Fits constants, then scores `1 / (1 + NRMSE)` times the soft repeat
/// penalty. Unfittable expressions and any non-finite prediction score 0.
pub fn reward(tree: &ExpressionTree, data: &RewardData, cs: &ConstraintSet) -> Scored {
    let zero = Scored { reward: 0.0, constants: tree.constants().to_vec() };
    if tree.min_features() > data.x.n_cols() {
        return zero;
    }
    let fit = match optimize_constants(tree, &data.x, &data.y) {
        Ok(f) => f,
        Err(_) => return zero,
    };
    let consts = if tree.n_placeholders() == 0 { tree.constants().to_vec() } else { fit.constants };
    let pred = tree.evaluate_columns(&data.x, &consts);
    if pred.iter().any(|p| !p.is_finite()) {
        return Scored { reward: 0.0, constants: consts };
    }
    let rmse = (pred.iter().zip(&data.y).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / data.y.len() as f64).sqrt();
    let r = 1.0 / (1.0 + rmse / data.sd) * repeat_penalty(tree.tokens(), cs);
    Scored { reward: r.clamp(0.0, 1.0), constants: consts }
}
