use super::prepared::PreparedTree;
use super::tree::{Columns, ExpressionTree};
use crate::{Error, Result};

/// Iteration cap per simplex run.
pub const MAX_ITERATIONS: usize = 200;
/// Starting value for every placeholder on the first and second run.
pub const INITIAL_GUESSES: [f64; 2] = [1.0, 0.1];

#[derive(Debug, Clone, PartialEq)]
pub struct ConstantFit {
    pub constants: Vec<f64>,
    pub mse: f64,
}

/// Result of [`nelder_mead`]. `value` is `+inf` if no probe was finite.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
}

/// Plain Nelder-Mead minimiser. Non-finite objective values are treated as
/// `+inf`, so the simplex retreats from domain boundaries.
pub fn nelder_mead<F>(mut f: F, x0: &[f64], max_iter: usize) -> SimplexResult
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let mut eval = |x: &[f64]| {
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    if n == 0 {
        return SimplexResult { x: Vec::new(), value: eval(x0), iterations: 0 };
    }
    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..n {
        let mut p = x0.to_vec();
        p[i] += if p[i] != 0.0 { 0.5 * p[i].abs().max(0.1) } else { 0.1 };
        simplex.push(p);
    }
    let mut values: Vec<f64> = simplex.iter().map(|p| eval(p)).collect();

    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let (best, worst) = (values[0], values[n]);
        let spread = simplex[1..]
            .iter()
            .flat_map(|p| p.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0_f64, f64::max);
        if best.is_finite() && (worst - best).abs() <= 1e-10 * best.abs() + 1e-300 && spread < 1e-9 {
            break;
        }

        let centroid: Vec<f64> = (0..n).map(|j| simplex[..n].iter().map(|p| p[j]).sum::<f64>() / n as f64).collect();
        let along = |t: f64| -> Vec<f64> { centroid.iter().zip(&simplex[n]).map(|(c, w)| c + t * (w - c)).collect() };

        let xr = along(-1.0);
        let fr = eval(&xr);
        if fr < values[0] {
            let xe = along(-2.0);
            let fe = eval(&xe);
            if fe < fr {
                simplex[n] = xe;
                values[n] = fe;
            } else {
                simplex[n] = xr;
                values[n] = fr;
            }
            continue;
        }
        if fr < values[n - 1] {
            simplex[n] = xr;
            values[n] = fr;
            continue;
        }
        let (xc, fc) = if fr < values[n] {
            let xc = along(-0.5);
            let fc = eval(&xc);
            (xc, fc)
        } else {
            let xc = along(0.5);
            let fc = eval(&xc);
            (xc, fc)
        };
        if fc < values[n].min(fr) {
            simplex[n] = xc;
            values[n] = fc;
            continue;
        }
        // shrink toward the best vertex
        for i in 1..=n {
            let p: Vec<f64> = simplex[0].iter().zip(&simplex[i]).map(|(b, x)| b + 0.5 * (x - b)).collect();
            values[i] = eval(&p);
            simplex[i] = p;
        }
    }
    let best = (0..=n).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap_or(0);
    SimplexResult { x: simplex[best].clone(), value: values[best], iterations }
}

/// Mean squared error of `pred` against `y`; `+inf` if any row is non-finite.
pub fn mse_or_inf(pred: &[f64], y: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (p, t) in pred.iter().zip(y) {
        if !p.is_finite() {
            return f64::INFINITY;
        }
        acc += (p - t) * (p - t);
    }
    acc / y.len().max(1) as f64
}

/// Fits placeholder values by minimising training MSE: one simplex run from
/// 1.0, one from 0.1, best kept.
pub fn optimize_constants(tree: &ExpressionTree, x: &Columns, y: &[f64]) -> Result<ConstantFit> {
    let prepared = PreparedTree::new(tree, x);
    let objective = |c: &[f64]| mse_or_inf(&prepared.evaluate(c), y);
    if tree.n_placeholders() == 0 {
        let mse = objective(tree.constants());
        if !mse.is_finite() {
            return Err(Error::Unfittable);
        }
        return Ok(ConstantFit { constants: Vec::new(), mse });
    }
    let mut best: Option<SimplexResult> = None;
    for guess in INITIAL_GUESSES {
        let start = vec![guess; tree.n_placeholders()];
        let r = nelder_mead(objective, &start, MAX_ITERATIONS);
        if best.as_ref().is_none_or(|b| r.value < b.value) {
            best = Some(r);
        }
        // an exact fit cannot be improved by the second start
        if best.as_ref().is_some_and(|b| b.value == 0.0) {
            break;
        }
    }
    let best = best.expect("two runs");
    if !best.value.is_finite() {
        return Err(Error::Unfittable);
    }
    Ok(ConstantFit { constants: best.x, mse: best.value })
}
