use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Uniform B-spline basis of order `k` (degree `k - 1`) over `G` intervals on
/// `[lo, hi]`. The knot vector extends `k - 1` knots past each end, giving
/// `G + k - 1` basis functions that sum to one on the domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BSplineBasis {
    grid: usize,
    order: usize,
    lo: f64,
    hi: f64,
    #[serde(skip)]
    knots: Vec<f64>,
}

impl BSplineBasis {
    pub fn new(grid: usize, order: usize, lo: f64, hi: f64) -> Result<Self> {
        if grid == 0 || order == 0 {
            return Err(Error::Config(format!("B-spline needs G >= 1 and k >= 1, got G={grid} k={order}")));
        }
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Config(format!("B-spline domain [{lo}, {hi}] is empty")));
        }
        let mut b = BSplineBasis { grid, order, lo, hi, knots: Vec::new() };
        b.build_knots();
        Ok(b)
    }

    fn build_knots(&mut self) {
        let h = (self.hi - self.lo) / self.grid as f64;
        let ext = self.order as i64 - 1;
        self.knots = (-ext..=self.grid as i64 + ext).map(|i| self.lo + i as f64 * h).collect();
        // pin the domain ends exactly
        self.knots[ext as usize] = self.lo;
        self.knots[(ext + self.grid as i64) as usize] = self.hi;
    }

    /// Rebuilds derived state after deserialisation.
    pub(crate) fn restore(&mut self) {
        self.build_knots();
    }

    pub fn grid(&self) -> usize {
        self.grid
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn n_basis(&self) -> usize {
        self.grid + self.order - 1
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.lo, self.hi)
    }

    /// Index `i` of the knot interval `[t_i, t_{i+1})` holding clamped `x`.
    fn span(&self, x: f64) -> usize {
        let ext = self.order - 1;
        let h = (self.hi - self.lo) / self.grid as f64;
        let cell = (((x - self.lo) / h).floor() as i64).clamp(0, self.grid as i64 - 1) as usize;
        let mut i = ext + cell;
        // guard against rounding at cell boundaries
        while i > ext && x < self.knots[i] {
            i -= 1;
        }
        while i + 1 < ext + self.grid && x >= self.knots[i + 1] {
            i += 1;
        }
        i
    }

    /// Order-`m` basis values on the knot intervals, from the Cox-de Boor recursion.
    fn table(&self, x: f64, m: usize) -> Vec<f64> {
        let t = &self.knots;
        let n_intervals = t.len() - 1;
        let mut b = vec![0.0; n_intervals];
        b[self.span(x)] = 1.0;
        for p in 1..m {
            // order p + 1 from order p
            for i in 0..n_intervals - p {
                let left = if t[i + p] > t[i] { (x - t[i]) / (t[i + p] - t[i]) * b[i] } else { 0.0 };
                let right = if t[i + p + 1] > t[i + 1] {
                    (t[i + p + 1] - x) / (t[i + p + 1] - t[i + 1]) * b[i + 1]
                } else {
                    0.0
                };
                b[i] = left + right;
            }
        }
        b.truncate(t.len() - m);
        b
    }

    /// Basis values at `x`, which is clamped to the domain first.
    pub fn eval(&self, x: f64) -> Vec<f64> {
        self.table(self.clamp(x), self.order)
    }

    /// Basis values and their derivatives with respect to `x`. Outside the
    /// domain the clamp makes every derivative zero.
    pub fn eval_with_derivative(&self, x: f64) -> (Vec<f64>, Vec<f64>) {
        let xc = self.clamp(x);
        let values = self.table(xc, self.order);
        let n = values.len();
        if self.order == 1 || x < self.lo || x > self.hi {
            return (values, vec![0.0; n]);
        }
        let lower = self.table(xc, self.order - 1);
        let t = &self.knots;
        let p = (self.order - 1) as f64;
        let k = self.order - 1;
        let deriv = (0..n)
            .map(|i| {
                let a = if t[i + k] > t[i] { p / (t[i + k] - t[i]) * lower[i] } else { 0.0 };
                let b = if t[i + k + 1] > t[i + 1] { p / (t[i + k + 1] - t[i + 1]) * lower[i + 1] } else { 0.0 };
                a - b
            })
            .collect();
        (values, deriv)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_and_knots() {
        let b = BSplineBasis::new(5, 3, -1.0, 1.0).unwrap();
        assert_eq!(b.n_basis(), 7);
        assert_eq!(b.knots().len(), 10);
        assert!(b.knots().windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(b.eval(0.3).len(), 7);
        assert!(BSplineBasis::new(0, 3, -1.0, 1.0).is_err());
        assert!(BSplineBasis::new(3, 3, 1.0, 1.0).is_err());
    }

    #[test]
    fn partition_of_unity_and_non_negative() {
        for (g, k) in [(5, 3), (8, 3), (10, 3), (50, 3), (4, 1), (7, 2), (6, 4)] {
            let b = BSplineBasis::new(g, k, -1.0, 1.05).unwrap();
            for i in 0..=500 {
                let x = -1.0 + 2.05 * i as f64 / 500.0;
                let v = b.eval(x);
                assert!(v.iter().all(|&y| y >= 0.0));
                assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-9, "G={g} k={k} x={x}");
            }
        }
    }

    #[test]
    fn order_one_is_indicator() {
        let b = BSplineBasis::new(4, 1, 0.0, 1.0).unwrap();
        for x in [0.0, 0.1, 0.25, 0.6, 0.99, 1.0] {
            let v = b.eval(x);
            assert_eq!(v.iter().filter(|&&y| y == 1.0).count(), 1);
            assert_eq!(v.iter().filter(|&&y| y == 0.0).count(), 3);
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let b = BSplineBasis::new(6, 3, -1.0, 1.0).unwrap();
        for x in [-0.93, -0.41, 0.07, 0.52, 0.88] {
            let (_, d) = b.eval_with_derivative(x);
            let h = 1e-6;
            let (vp, vm) = (b.eval(x + h), b.eval(x - h));
            for i in 0..d.len() {
                assert!((d[i] - (vp[i] - vm[i]) / (2.0 * h)).abs() < 1e-6);
            }
        }
        let (_, d) = b.eval_with_derivative(3.0);
        assert!(d.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn clamps_outside() {
        let b = BSplineBasis::new(5, 3, -1.0, 1.0).unwrap();
        assert_eq!(b.eval(7.0), b.eval(1.0));
        assert_eq!(b.eval(-7.0), b.eval(-1.0));
    }
}
