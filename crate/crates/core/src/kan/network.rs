use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::bspline::BSplineBasis;
use super::symbolic::SymbolicEdge;
use crate::{Error, Result};

/// Spline domain for max-normalised inputs.
pub const INPUT_DOMAIN: (f64, f64) = (-1.0, 1.05);

pub fn silu(x: f64) -> f64 {
    x / (1.0 + (-x).exp())
}

pub fn silu_derivative(x: f64) -> f64 {
    let s = 1.0 / (1.0 + (-x).exp());
    s * (1.0 + x * (1.0 - s))
}

/// One learnable activation `w_base * silu(x) + w_spline * sum(c_i B_i(x))`,
/// or a fitted closed form once made symbolic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KanEdge {
    pub coeffs: Vec<f64>,
    pub w_base: f64,
    pub w_spline: f64,
    /// False once pruned; the edge then outputs exactly zero.
    pub active: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub symbolic: Option<SymbolicEdge>,
}

impl KanEdge {
    pub fn spline(&self, basis: &BSplineBasis, x: f64) -> f64 {
        basis.eval(x).iter().zip(&self.coeffs).map(|(b, c)| b * c).sum()
    }

    pub fn forward(&self, basis: &BSplineBasis, x: f64) -> f64 {
        if !self.active {
            return 0.0;
        }
        if let Some(s) = &self.symbolic {
            return s.eval(x);
        }
        self.w_base * silu(x) + self.w_spline * self.spline(basis, x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KanLayer {
    pub d_in: usize,
    pub d_out: usize,
    pub basis: BSplineBasis,
    /// Row-major `d_in x d_out`; see [`KanLayer::edge`].
    pub edges: Vec<KanEdge>,
}

impl KanLayer {
    pub fn index(&self, p: usize, q: usize) -> usize {
        p * self.d_out + q
    }

    /// Edge from input node `p` to output node `q`.
    pub fn edge(&self, p: usize, q: usize) -> &KanEdge {
        &self.edges[self.index(p, q)]
    }

    pub fn edge_mut(&mut self, p: usize, q: usize) -> &mut KanEdge {
        let i = self.index(p, q);
        &mut self.edges[i]
    }

    /// Node sums for one input vector.
    pub fn forward_row(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.d_out];
        for (p, &xp) in x.iter().enumerate() {
            for (q, o) in out.iter_mut().enumerate() {
                *o += self.edge(p, q).forward(&self.basis, xp);
            }
        }
        out
    }
}

/// Options that fix a network's architecture and initial parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KanInit {
    pub grid: usize,
    pub order: usize,
    /// Spline domain of layers after the first.
    pub hidden_domain: (f64, f64),
    /// Half-width of the uniform draw for spline coefficients.
    pub coeff_noise: f64,
    pub seed: u64,
}

impl Default for KanInit {
    fn default() -> Self {
        KanInit { grid: 5, order: 3, hidden_domain: (-2.0, 2.0), coeff_noise: 0.1, seed: 0 }
    }
}

/// Stack of KAN layers plus a fixed output affine and the input
/// normalisation the network was trained under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KanNetwork {
    pub shape: Vec<usize>,
    pub layers: Vec<KanLayer>,
    /// Prediction = `out_bias + out_scale * (last layer output)`.
    pub out_scale: f64,
    pub out_bias: f64,
    /// Per-input divisor applied to raw features, if inputs were normalised.
    pub norm: Option<Vec<f64>>,
}

impl KanNetwork {
    pub fn new(shape: &[usize], init: &KanInit) -> Result<Self> {
        if shape.len() < 2 || shape.contains(&0) {
            return Err(Error::Config(format!("KAN shape needs >= 2 positive widths, got {shape:?}")));
        }
        if *shape.last().expect("len checked") != 1 {
            return Err(Error::Config(format!("KAN output width must be 1, got {shape:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(init.seed);
        let mut layers = Vec::new();
        for (l, w) in shape.windows(2).enumerate() {
            let (lo, hi) = if l == 0 { INPUT_DOMAIN } else { init.hidden_domain };
            let basis = BSplineBasis::new(init.grid, init.order, lo, hi)?;
            let (d_in, d_out) = (w[0], w[1]);
            let w_base = 1.0 / (d_in as f64).sqrt();
            let edges = (0..d_in * d_out)
                .map(|_| KanEdge {
                    coeffs: (0..basis.n_basis())
                        .map(|_| {
                            if init.coeff_noise > 0.0 {
                                rng.random_range(-init.coeff_noise..init.coeff_noise)
                            } else {
                                0.0
                            }
                        })
                        .collect(),
                    w_base,
                    w_spline: 1.0,
                    active: true,
                    symbolic: None,
                })
                .collect();
            layers.push(KanLayer { d_in, d_out, basis, edges });
        }
        Ok(KanNetwork { shape: shape.to_vec(), layers, out_scale: 1.0, out_bias: 0.0, norm: None })
    }

    pub fn n_inputs(&self) -> usize {
        self.shape[0]
    }

    fn check_width(&self, x: &[Vec<f64>]) -> Result<()> {
        if let Some(r) = x.iter().find(|r| r.len() != self.n_inputs()) {
            return Err(Error::Shape { expected: self.n_inputs(), got: r.len() });
        }
        Ok(())
    }

    /// Last-layer node value before the output affine.
    pub fn forward_raw_sum(&self, row: &[f64]) -> f64 {
        let mut h = row.to_vec();
        for layer in &self.layers {
            h = layer.forward_row(&h);
        }
        h[0]
    }

    /// Predictions for rows already in the network's (normalised) input space.
    pub fn forward(&self, x: &[Vec<f64>]) -> Result<Vec<f64>> {
        self.check_width(x)?;
        Ok(x.iter().map(|r| self.out_bias + self.out_scale * self.forward_raw_sum(r)).collect())
    }

    /// Predictions for raw feature rows; applies the stored normalisation first.
    pub fn forward_unnormalized(&self, x: &[Vec<f64>]) -> Result<Vec<f64>> {
        match &self.norm {
            None => self.forward(x),
            Some(m) => {
                self.check_width(x)?;
                let scaled: Vec<Vec<f64>> = x.iter().map(|r| r.iter().zip(m).map(|(v, s)| v / s).collect()).collect();
                self.forward(&scaled)
            }
        }
    }

    /// Inputs seen by every layer, row by row: `acts[l][row]` feeds layer `l`.
    pub fn layer_inputs(&self, x: &[Vec<f64>]) -> Vec<Vec<Vec<f64>>> {
        let mut acts = vec![x.to_vec()];
        for layer in &self.layers {
            let next = acts.last().expect("non-empty").iter().map(|r| layer.forward_row(r)).collect();
            acts.push(next);
        }
        acts.truncate(self.layers.len());
        acts
    }

    /// Mean |edge output| per edge, normalised so each layer's maximum is 1.
    /// Layers whose edges are all zero stay zero.
    pub fn edge_importance(&self, x: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        self.check_width(x)?;
        if x.is_empty() {
            return Err(Error::Data("importance needs at least one row".into()));
        }
        let acts = self.layer_inputs(x);
        let mut out = Vec::new();
        for (layer, inputs) in self.layers.iter().zip(&acts) {
            let mut s = vec![0.0; layer.edges.len()];
            for row in inputs {
                for p in 0..layer.d_in {
                    for q in 0..layer.d_out {
                        s[layer.index(p, q)] += layer.edge(p, q).forward(&layer.basis, row[p]).abs();
                    }
                }
            }
            let n = inputs.len() as f64;
            s.iter_mut().for_each(|v| *v /= n);
            let max = s.iter().copied().fold(0.0, f64::max);
            if max > 0.0 {
                s.iter_mut().for_each(|v| *v /= max);
            }
            out.push(s);
        }
        Ok(out)
    }

    /// Deactivates edges whose importance is below `threshold`.
    pub fn prune(&mut self, x: &[Vec<f64>], threshold: f64) -> Result<PruneReport> {
        let scores = self.edge_importance(x)?;
        if threshold > 1.0 {
            return Err(Error::Config(format!("pruning threshold {threshold} exceeds the maximum importance 1")));
        }
        let mut pruned = Vec::new();
        for (l, (layer, s)) in self.layers.iter().zip(&scores).enumerate() {
            let survivors = layer.edges.iter().zip(s).filter(|(e, v)| e.active && **v >= threshold).count();
            if survivors == 0 {
                return Err(Error::Config(format!("threshold {threshold} would prune every edge of layer {l}")));
            }
        }
        for (l, (layer, s)) in self.layers.iter_mut().zip(&scores).enumerate() {
            for p in 0..layer.d_in {
                for q in 0..layer.d_out {
                    let i = layer.index(p, q);
                    if layer.edges[i].active && s[i] < threshold {
                        layer.edges[i].active = false;
                        pruned.push((l, p, q));
                    }
                }
            }
        }
        Ok(PruneReport { pruned, disconnected: self.disconnected_nodes() })
    }

    /// `(layer, node)` pairs, counted from the first hidden layer as 1, whose
    /// incoming edges are all inactive.
    pub fn disconnected_nodes(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            for q in 0..layer.d_out {
                if (0..layer.d_in).all(|p| !layer.edge(p, q).active) {
                    out.push((l + 1, q));
                }
            }
        }
        out
    }

    /// First edge, as `(layer, from, to)`, whose output on `x` is non-finite.
    pub fn first_non_finite_edge(&self, x: &[Vec<f64>]) -> Option<(usize, usize, usize)> {
        let acts = self.layer_inputs(x);
        for (l, (layer, inputs)) in self.layers.iter().zip(&acts).enumerate() {
            for row in inputs {
                for p in 0..layer.d_in {
                    for q in 0..layer.d_out {
                        if !layer.edge(p, q).forward(&layer.basis, row[p]).is_finite() {
                            return Some((l, p, q));
                        }
                    }
                }
            }
        }
        None
    }

    pub fn n_active_edges(&self) -> usize {
        self.layers.iter().flat_map(|l| &l.edges).filter(|e| e.active).count()
    }

    pub fn is_fully_symbolic(&self) -> bool {
        self.layers.iter().flat_map(|l| &l.edges).all(|e| !e.active || e.symbolic.is_some())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PruneReport {
    /// `(layer, from, to)` of every newly pruned edge.
    pub pruned: Vec<(usize, usize, usize)>,
    pub disconnected: Vec<(usize, usize)>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn net(shape: &[usize]) -> KanNetwork {
        KanNetwork::new(shape, &KanInit { seed: 3, ..Default::default() }).unwrap()
    }

    #[test]
    fn silu_values() {
        assert_eq!(silu(0.0), 0.0);
        let h = 1e-6;
        for x in [-3.0, -0.5, 0.0, 0.7, 4.0] {
            assert!((silu_derivative(x) - (silu(x + h) - silu(x - h)) / (2.0 * h)).abs() < 1e-8);
        }
    }

    #[test]
    fn edge_formula() {
        let b = BSplineBasis::new(5, 3, -1.0, 1.0).unwrap();
        let mut e = KanEdge { coeffs: vec![0.0; 7], w_base: 1.0, w_spline: 0.0, active: true, symbolic: None };
        assert_eq!(e.forward(&b, 0.0), 0.0);
        e.coeffs = vec![2.5; 7];
        e.w_base = 0.0;
        e.w_spline = 1.0;
        assert!((e.forward(&b, 0.3) - 2.5).abs() < 1e-12);
        let coeffs: Vec<f64> = (0..7).map(|i| (i as f64 * 0.7).sin()).collect();
        let e = KanEdge { coeffs: coeffs.clone(), w_base: 0.4, w_spline: 1.3, active: true, symbolic: None };
        for i in 0..21 {
            let x = -1.0 + i as f64 * 0.1;
            let direct =
                0.4 * x / (1.0 + (-x).exp()) + 1.3 * b.eval(x).iter().zip(&coeffs).map(|(u, c)| u * c).sum::<f64>();
            assert!((e.forward(&b, x) - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_network_outputs_zero() {
        let mut n = net(&[3, 2, 1]);
        for l in &mut n.layers {
            for e in &mut l.edges {
                e.coeffs.iter_mut().for_each(|c| *c = 0.0);
                e.w_base = 0.0;
                e.w_spline = 0.0;
            }
        }
        let out = n.forward(&[vec![0.1, -0.4, 0.9], vec![1.0, 1.0, 1.0]]).unwrap();
        assert_eq!(out, vec![0.0, 0.0]);
    }

    #[test]
    fn two_input_net_sums_edges() {
        let n = net(&[2, 1]);
        let l = &n.layers[0];
        let x = vec![0.3, -0.6];
        let expect = l.edge(0, 0).forward(&l.basis, 0.3) + l.edge(1, 0).forward(&l.basis, -0.6);
        assert_eq!(n.forward(&[x]).unwrap()[0], expect);
    }

    #[test]
    fn shape_errors() {
        assert!(KanNetwork::new(&[2], &KanInit::default()).is_err());
        assert!(KanNetwork::new(&[2, 2], &KanInit::default()).is_err());
        let n = net(&[2, 1]);
        assert!(matches!(n.forward(&[vec![1.0]]), Err(Error::Shape { .. })));
    }

    #[test]
    fn importance_and_pruning() {
        let mut n = net(&[3, 2, 1]);
        n.layers[0].edge_mut(2, 1).active = false;
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 / 20.0, 0.5, -0.3]).collect();
        let s = n.edge_importance(&x).unwrap();
        assert_eq!(s[0][n.layers[0].index(2, 1)], 0.0);
        for layer in &s {
            assert!(layer.iter().all(|v| (0.0..=1.0).contains(v)));
            assert_eq!(layer.iter().copied().fold(0.0, f64::max), 1.0);
        }
        let mut twice = x.clone();
        twice.extend(x.clone());
        let s2 = n.edge_importance(&twice).unwrap();
        for (a, b) in s.iter().flatten().zip(s2.iter().flatten()) {
            assert!((a - b).abs() < 1e-12);
        }

        let before = n.clone();
        let r = n.prune(&x, 0.0).unwrap();
        assert!(r.pruned.is_empty());
        assert_eq!(n, before);
        assert!(n.prune(&x, 1.5).is_err());
    }

    #[test]
    fn disconnected_node_reported() {
        let mut n = net(&[2, 2, 1]);
        n.layers[0].edge_mut(0, 1).active = false;
        n.layers[0].edge_mut(1, 1).active = false;
        assert_eq!(n.disconnected_nodes(), vec![(1, 1)]);
    }
}
