use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::network::{silu, silu_derivative, KanInit, KanNetwork};
use crate::optim::Adam;
use crate::plmodels::Dataset;
use crate::{Error, Result};

/// Rows per gradient chunk. Fixed so the reduction order, and therefore the
/// result, does not depend on the number of worker threads.
const CHUNK: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KanTrainConfig {
    pub shape: Vec<usize>,
    pub grid: usize,
    pub order: usize,
    pub steps: usize,
    pub lambda: f64,
    pub learning_rate: f64,
    pub hidden_domain: (f64, f64),
    pub coeff_noise: f64,
    pub seed: u64,
}

impl Default for KanTrainConfig {
    fn default() -> Self {
        KanTrainConfig::ci()
    }
}

impl KanTrainConfig {
    fn tuned(shape: &[usize], grid: usize, steps: usize, lambda: f64) -> Self {
        let init = KanInit::default();
        KanTrainConfig {
            shape: shape.to_vec(),
            grid,
            order: 3,
            steps,
            lambda,
            learning_rate: 0.02,
            hidden_domain: init.hidden_domain,
            coeff_noise: init.coeff_noise,
            seed: 0,
        }
    }

    pub fn abg() -> Self {
        Self::tuned(&[6, 6, 1], 10, 100, 0.002)
    }

    pub fn ci() -> Self {
        Self::tuned(&[4, 4, 1], 8, 300, 0.002)
    }

    pub fn indoor() -> Self {
        Self::tuned(&[4, 1], 5, 100, 0.0002)
    }

    pub fn outdoor() -> Self {
        Self::tuned(&[3, 1], 50, 100, 0.02)
    }

    /// Tuned preset by name: `abg`, `ci`, `indoor` or `outdoor`.
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "abg" => Ok(Self::abg()),
            "ci" => Ok(Self::ci()),
            "indoor" => Ok(Self::indoor()),
            "outdoor" => Ok(Self::outdoor()),
            other => Err(Error::Config(format!("unknown KAN preset '{other}'"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be > 0, got {}", self.learning_rate)));
        }
        if self.order == 0 || self.grid == 0 {
            return Err(Error::Config("grid and order must be >= 1".into()));
        }
        Ok(())
    }

    pub fn init(&self) -> KanInit {
        KanInit {
            grid: self.grid,
            order: self.order,
            hidden_domain: self.hidden_domain,
            coeff_noise: self.coeff_noise,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub step: usize,
    /// Objective in standardised target units: MSE plus regularisation.
    pub loss: f64,
    /// Training MSE in target units.
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub history: Vec<TrainRecord>,
    pub initial_mse: f64,
    pub final_mse: f64,
}

/// Flattened trainable parameters: per layer, per edge, the spline
/// coefficients followed by `w_base` and `w_spline`.
pub fn parameters(net: &KanNetwork) -> Vec<f64> {
    let mut p = Vec::new();
    for layer in &net.layers {
        for e in &layer.edges {
            p.extend_from_slice(&e.coeffs);
            p.push(e.w_base);
            p.push(e.w_spline);
        }
    }
    p
}

pub fn set_parameters(net: &mut KanNetwork, p: &[f64]) {
    let mut i = 0;
    for layer in &mut net.layers {
        for e in &mut layer.edges {
            let n = e.coeffs.len();
            e.coeffs.copy_from_slice(&p[i..i + n]);
            e.w_base = p[i + n];
            e.w_spline = p[i + n + 1];
            i += n + 2;
        }
    }
}

/// Objective value, standardised-unit MSE and gradient for `z`-space
/// targets `t`. Inactive edges contribute nothing and get zero gradient.
pub fn loss_and_gradient(net: &KanNetwork, x: &[Vec<f64>], t: &[f64], lambda: f64) -> (f64, f64, Vec<f64>) {
    let n_params = parameters(net).len();
    // offset of each edge's block in the flat parameter vector
    let mut offsets = Vec::new();
    let mut off = 0;
    for layer in &net.layers {
        let mut o = Vec::with_capacity(layer.edges.len());
        for e in &layer.edges {
            o.push(off);
            off += e.coeffs.len() + 2;
        }
        offsets.push(o);
    }
    let n = x.len() as f64;
    let partials: Vec<(f64, f64, Vec<f64>)> = x
        .par_chunks(CHUNK)
        .zip(t.par_chunks(CHUNK))
        .map(|(xc, tc)| {
            let mut grad = vec![0.0; n_params];
            let mut sq = 0.0;
            let mut reg = 0.0;
            for (row, target) in xc.iter().zip(tc) {
                // forward, keeping each layer's input and per-input bases
                let mut inputs = vec![row.clone()];
                let mut bases = Vec::with_capacity(net.layers.len());
                let mut outs = Vec::with_capacity(net.layers.len());
                for layer in &net.layers {
                    let h = inputs.last().expect("non-empty");
                    let b: Vec<(Vec<f64>, Vec<f64>)> = h.iter().map(|v| layer.basis.eval_with_derivative(*v)).collect();
                    let mut next = vec![0.0; layer.d_out];
                    let mut phi = vec![0.0; layer.edges.len()];
                    for p in 0..layer.d_in {
                        for q in 0..layer.d_out {
                            let i = layer.index(p, q);
                            let e = &layer.edges[i];
                            if !e.active {
                                continue;
                            }
                            let s: f64 = b[p].0.iter().zip(&e.coeffs).map(|(u, c)| u * c).sum();
                            let v = e.w_base * silu(h[p]) + e.w_spline * s;
                            phi[i] = v;
                            reg += v.abs();
                            next[q] += v;
                        }
                    }
                    bases.push(b);
                    outs.push(phi);
                    inputs.push(next);
                }
                let z = inputs.last().expect("non-empty")[0];
                sq += (z - target) * (z - target);

                let mut g_next = vec![2.0 * (z - target) / n];
                for l in (0..net.layers.len()).rev() {
                    let layer = &net.layers[l];
                    let h = &inputs[l];
                    let mut g_in = vec![0.0; layer.d_in];
                    for p in 0..layer.d_in {
                        let (bv, bd) = &bases[l][p];
                        let (sl, sld) = (silu(h[p]), silu_derivative(h[p]));
                        for q in 0..layer.d_out {
                            let i = layer.index(p, q);
                            let e = &layer.edges[i];
                            if !e.active {
                                continue;
                            }
                            let v = outs[l][i];
                            let sign = if v > 0.0 {
                                1.0
                            } else if v < 0.0 {
                                -1.0
                            } else {
                                0.0
                            };
                            let dphi = g_next[q] + lambda * sign / n;
                            let o = offsets[l][i];
                            let nb = e.coeffs.len();
                            let mut s = 0.0;
                            let mut sd = 0.0;
                            for k in 0..nb {
                                grad[o + k] += dphi * e.w_spline * bv[k];
                                s += e.coeffs[k] * bv[k];
                                sd += e.coeffs[k] * bd[k];
                            }
                            grad[o + nb] += dphi * sl;
                            grad[o + nb + 1] += dphi * s;
                            g_in[p] += dphi * (e.w_base * sld + e.w_spline * sd);
                        }
                    }
                    g_next = g_in;
                }
            }
            (sq, reg, grad)
        })
        .collect();
    let mut grad = vec![0.0; n_params];
    let mut sq = 0.0;
    let mut reg = 0.0;
    for (s, r, g) in partials {
        sq += s;
        reg += r;
        grad.iter_mut().zip(g).for_each(|(a, b)| *a += b);
    }
    let mse = sq / n;
    (mse + lambda * reg / n, mse, grad)
}

/// Full-batch Adam on MSE + lambda * (sum over edges of mean |edge output|),
/// measured against the target standardised by the network's output affine.
/// If training ends worse than it started, the starting parameters are kept.
pub fn train(net: &mut KanNetwork, x: &[Vec<f64>], y: &[f64], cfg: &KanTrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if x.len() != y.len() {
        return Err(Error::Shape { expected: x.len(), got: y.len() });
    }
    if x.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    if net.layers.iter().flat_map(|l| &l.edges).any(|e| e.symbolic.is_some()) {
        return Err(Error::Config("spline training needs a network without symbolic edges".into()));
    }
    net.forward(&x[..1])?;
    let t: Vec<f64> = y.iter().map(|v| (v - net.out_bias) / net.out_scale).collect();
    let scale2 = net.out_scale * net.out_scale;

    let start = parameters(net);
    let mut params = start.clone();
    let mut opt = Adam::new(params.len(), cfg.learning_rate);
    let mut history = Vec::with_capacity(cfg.steps + 1);
    let mut initial_mse = f64::NAN;
    for step in 0..=cfg.steps {
        let (loss, mse, grad) = loss_and_gradient(net, x, &t, cfg.lambda);
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Training(format!(
                "non-finite loss at step {step}; first non-finite edge (layer, from, to) = {:?}",
                net.first_non_finite_edge(x)
            )));
        }
        history.push(TrainRecord { step, loss, mse: mse * scale2 });
        if step == 0 {
            initial_mse = mse * scale2;
        }
        if step == cfg.steps {
            break;
        }
        opt.step(&mut params, &grad);
        set_parameters(net, &params);
    }
    let mut final_mse = history.last().expect("at least one record").mse;
    if final_mse > initial_mse {
        set_parameters(net, &start);
        final_mse = initial_mse;
    }
    Ok(TrainOutcome { history, initial_mse, final_mse })
}

/// Builds a network for `train_ds` (expected max-normalised), sets the output
/// affine to the target mean and population standard deviation, and trains it.
pub fn fit_network(train_ds: &Dataset, cfg: &KanTrainConfig) -> Result<(KanNetwork, TrainOutcome)> {
    cfg.validate()?;
    let mut shape = cfg.shape.clone();
    if shape.first() != Some(&train_ds.n_features()) {
        return Err(Error::Shape { expected: shape.first().copied().unwrap_or(0), got: train_ds.n_features() });
    }
    if let Some(w) = shape.last_mut() {
        *w = 1;
    }
    let mut net = KanNetwork::new(&shape, &cfg.init())?;
    let y = &train_ds.target;
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let std = (y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / y.len() as f64).sqrt();
    net.out_bias = mean;
    net.out_scale = if std > 0.0 { std } else { 1.0 };
    net.norm = train_ds.norm.clone();
    let outcome = train(&mut net, &train_ds.rows, y, cfg)?;
    Ok((net, outcome))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_net(shape: &[usize], grid: usize) -> KanNetwork {
        let init = KanInit { grid, coeff_noise: 0.3, seed: 9, ..Default::default() };
        let mut n = KanNetwork::new(shape, &init).unwrap();
        // vary the scales so every parameter matters
        for (l, layer) in n.layers.iter_mut().enumerate() {
            for (i, e) in layer.edges.iter_mut().enumerate() {
                e.w_base = 0.3 + 0.1 * (i + l) as f64;
                e.w_spline = 0.8 - 0.05 * i as f64;
            }
        }
        n
    }

    fn data() -> (Vec<Vec<f64>>, Vec<f64>) {
        let x: Vec<Vec<f64>> = (0..25).map(|i| vec![-0.9 + 0.07 * i as f64, (i as f64 * 0.37).sin() * 0.8]).collect();
        let t = x.iter().map(|r| r[0] * r[1] + 0.3 * r[0]).collect();
        (x, t)
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let net = small_net(&[2, 2, 1], 5);
        let (x, t) = data();
        for lambda in [0.0, 0.01] {
            let (_, _, g) = loss_and_gradient(&net, &x, &t, lambda);
            let p0 = parameters(&net);
            let h = 1e-5;
            for i in 0..p0.len() {
                let mut n2 = net.clone();
                let mut p = p0.clone();
                p[i] += h;
                set_parameters(&mut n2, &p);
                let fp = loss_and_gradient(&n2, &x, &t, lambda).0;
                p[i] -= 2.0 * h;
                set_parameters(&mut n2, &p);
                let fm = loss_and_gradient(&n2, &x, &t, lambda).0;
                let fd = (fp - fm) / (2.0 * h);
                let tol = 1e-4 * fd.abs().max(g[i].abs()).max(1e-6);
                assert!((fd - g[i]).abs() <= tol, "param {i}: analytic {} fd {fd} (lambda {lambda})", g[i]);
            }
        }
    }

    #[test]
    fn smoke_fit_reduces_mse() {
        let mut net = KanNetwork::new(&[1, 1], &KanInit { grid: 5, seed: 1, ..Default::default() }).unwrap();
        let x: Vec<Vec<f64>> = (0..100).map(|i| vec![-1.0 + 0.02 * i as f64]).collect();
        let y: Vec<f64> = x.iter().map(|r| 2.0 * silu(2.0 * r[0]) + 0.5).collect();
        let cfg = KanTrainConfig { steps: 100, lambda: 0.0, learning_rate: 0.05, ..KanTrainConfig::ci() };
        let out = train(&mut net, &x, &y, &cfg).unwrap();
        assert!(out.final_mse * 10.0 <= out.initial_mse, "{} -> {}", out.initial_mse, out.final_mse);
    }

    #[test]
    fn strong_regularisation_shrinks_activations() {
        let (x, t) = data();
        let mean_abs = |lambda: f64| {
            let mut net = small_net(&[2, 1], 5);
            let cfg = KanTrainConfig { steps: 150, lambda, learning_rate: 0.02, ..KanTrainConfig::ci() };
            train(&mut net, &x, &t, &cfg).unwrap();
            let acts = net.layer_inputs(&x);
            let l = &net.layers[0];
            let mut s = 0.0;
            for r in &acts[0] {
                for p in 0..2 {
                    s += l.edge(p, 0).forward(&l.basis, r[p]).abs();
                }
            }
            s
        };
        assert!(mean_abs(1e3) < mean_abs(0.0));
    }

    #[test]
    fn identity_fit_single_edge() {
        let mut net = KanNetwork::new(&[1, 1], &KanInit { grid: 10, seed: 2, ..Default::default() }).unwrap();
        let x: Vec<Vec<f64>> = (0..201).map(|i| vec![-1.0 + 0.01 * i as f64]).collect();
        let y: Vec<f64> = x.iter().map(|r| r[0]).collect();
        let cfg = KanTrainConfig { steps: 2000, lambda: 0.0, learning_rate: 0.02, ..KanTrainConfig::ci() };
        train(&mut net, &x, &y, &cfg).unwrap();
        let pred = net.forward(&x).unwrap();
        let max_err = pred.iter().zip(&y).map(|(p, t)| (p - t).abs()).fold(0.0, f64::max);
        assert!(max_err < 1e-3, "max error {max_err}");
    }
}
