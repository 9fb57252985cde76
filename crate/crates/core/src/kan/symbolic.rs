use nalgebra::{DMatrix, DVector, Matrix4, Vector4};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::network::KanNetwork;
use crate::expr::{ExpressionTree, Token};
use crate::{Error, Result};

/// Minimum number of (input, output) samples needed to fit an edge.
pub const MIN_SAMPLES: usize = 20;
/// R² gap within which a simpler family is preferred.
pub const TIE_WINDOW: f64 = 0.02;

/// Elementary functions available for edge replacement, declared simplest
/// first; the declaration order is the complexity rank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Zero,
    Identity,
    Square,
    Cube,
    Sqrt,
    Log10,
    Exp,
    Cos,
    Sin,
    InvSquare,
}

pub const DEFAULT_LIBRARY: [Family; 10] = [
    Family::Zero,
    Family::Identity,
    Family::Square,
    Family::Cube,
    Family::Sqrt,
    Family::Log10,
    Family::Exp,
    Family::Cos,
    Family::Sin,
    Family::InvSquare,
];

impl Family {
    pub fn f(self, u: f64) -> f64 {
        match self {
            Family::Zero => 0.0,
            Family::Identity => u,
            Family::Square => u * u,
            Family::Cube => u * u * u,
            Family::Sqrt => u.sqrt(),
            Family::Log10 => u.log10(),
            Family::Exp => u.exp(),
            Family::Cos => u.cos(),
            Family::Sin => u.sin(),
            Family::InvSquare => 1.0 / (u * u),
        }
    }

    pub fn df(self, u: f64) -> f64 {
        match self {
            Family::Zero => 0.0,
            Family::Identity => 1.0,
            Family::Square => 2.0 * u,
            Family::Cube => 3.0 * u * u,
            Family::Sqrt => 0.5 / u.sqrt(),
            Family::Log10 => 1.0 / (u * std::f64::consts::LN_10),
            Family::Exp => u.exp(),
            Family::Cos => -u.sin(),
            Family::Sin => u.cos(),
            Family::InvSquare => -2.0 / (u * u * u),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::Zero => "zero",
            Family::Identity => "x",
            Family::Square => "x^2",
            Family::Cube => "x^3",
            Family::Sqrt => "sqrt",
            Family::Log10 => "log10",
            Family::Exp => "exp",
            Family::Cos => "cos",
            Family::Sin => "sin",
            Family::InvSquare => "1/x^2",
        }
    }

    pub fn parse(s: &str) -> Result<Family> {
        DEFAULT_LIBRARY
            .into_iter()
            .find(|f| f.name() == s || format!("{f:?}").eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Parse(format!("unknown symbolic family '{s}'")))
    }

    /// Prefix tokens computing `f(arg)`.
    fn wrap(self, arg: Vec<Token>) -> Vec<Token> {
        let mut out = match self {
            Family::Zero => return vec![Token::Lit(0.0)],
            Family::Identity => return arg,
            Family::Square => vec![Token::Square],
            Family::Cube => vec![Token::Cube],
            Family::Sqrt => vec![Token::Sqrt],
            Family::Log10 => vec![Token::Log10],
            Family::Exp => vec![Token::Exp],
            Family::Cos => vec![Token::Cos],
            Family::Sin => vec![Token::Sin],
            Family::InvSquare => vec![Token::Div, Token::Lit(1.0), Token::Square],
        };
        out.extend(arg);
        out
    }
}

/// `c * f(a * x + b) + d`. The zero family is the constant `d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymbolicEdge {
    pub family: Family,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub r2: f64,
}

impl SymbolicEdge {
    pub fn eval(&self, x: f64) -> f64 {
        if self.family == Family::Zero {
            return self.d;
        }
        self.c * self.family.f(self.a * x + self.b) + self.d
    }

    /// Derivative with respect to the input.
    pub fn dx(&self, x: f64) -> f64 {
        self.c * self.family.df(self.a * x + self.b) * self.a
    }

    /// Derivatives with respect to (a, b, c, d).
    pub fn dparams(&self, x: f64) -> [f64; 4] {
        if self.family == Family::Zero {
            return [0.0, 0.0, 0.0, 1.0];
        }
        let u = self.a * x + self.b;
        let g = self.c * self.family.df(u);
        [g * x, g, self.family.f(u), 1.0]
    }

    fn params(&self) -> [f64; 4] {
        [self.a, self.b, self.c, self.d]
    }

    fn with_params(&self, p: &[f64]) -> SymbolicEdge {
        SymbolicEdge { a: p[0], b: p[1], c: p[2], d: p[3], ..*self }
    }

    /// Prefix tokens for this edge applied to `input`, with the input scaled by
    /// `1 / input_scale` folded into `a`.
    pub fn to_tokens(&self, input: Vec<Token>, input_scale: f64) -> Vec<Token> {
        if self.family == Family::Zero {
            return vec![Token::Lit(self.d)];
        }
        let mut arg = vec![Token::Add, Token::Mul, Token::Lit(self.a / input_scale)];
        arg.extend(input);
        arg.push(Token::Lit(self.b));
        let mut out = vec![Token::Add, Token::Mul, Token::Lit(self.c)];
        out.extend(self.family.wrap(arg));
        out.push(Token::Lit(self.d));
        out
    }
}

fn sse(edge: &SymbolicEdge, xs: &[f64], ys: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        let r = edge.eval(*x) - y;
        if !r.is_finite() {
            return f64::INFINITY;
        }
        s += r * r;
    }
    s
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Least-squares (c, d) for `y ~ c u + d`, or `None` if `u` is degenerate.
fn ols(u: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    if u.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let (mu, my) = (mean(u), mean(y));
    let mut suu = 0.0;
    let mut suy = 0.0;
    for (a, b) in u.iter().zip(y) {
        suu += (a - mu) * (a - mu);
        suy += (a - mu) * (b - my);
    }
    if !(suu > 1e-300) || !suu.is_finite() {
        return None;
    }
    let c = suy / suu;
    Some((c, my - c * mu))
}

/// Levenberg-Marquardt on (a, b, c, d); only loss-reducing steps are taken.
fn refine(start: SymbolicEdge, xs: &[f64], ys: &[f64], iterations: usize) -> SymbolicEdge {
    let mut cur = start;
    let mut cur_sse = sse(&cur, xs, ys);
    if !cur_sse.is_finite() {
        return cur;
    }
    let mut lambda = 1e-3;
    for _ in 0..iterations {
        let mut jtj = Matrix4::<f64>::zeros();
        let mut jtr = Vector4::<f64>::zeros();
        for (x, y) in xs.iter().zip(ys) {
            let j = Vector4::from(cur.dparams(*x));
            let r = cur.eval(*x) - y;
            jtj += j * j.transpose();
            jtr += j * r;
        }
        let mut improved = false;
        while lambda < 1e12 {
            let mut m = jtj;
            for i in 0..4 {
                m[(i, i)] += lambda * (jtj[(i, i)] + 1e-12);
            }
            let Some(step) = m.lu().solve(&(-jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let p: Vec<f64> = cur.params().iter().zip(step.iter()).map(|(a, s)| a + s).collect();
            let cand = cur.with_params(&p);
            let cand_sse = sse(&cand, xs, ys);
            if cand_sse < cur_sse {
                let gain = cur_sse - cand_sse;
                cur = cand;
                cur_sse = cand_sse;
                lambda = (lambda / 3.0).max(1e-12);
                improved = gain > 1e-15 * cur_sse.max(1e-300);
                break;
            }
            lambda *= 4.0;
        }
        if !improved {
            break;
        }
    }
    cur
}

fn r2_of(sse: f64, ss_tot: f64) -> f64 {
    if sse.is_finite() {
        1.0 - sse / ss_tot
    } else {
        f64::NEG_INFINITY
    }
}

fn fit_family(family: Family, xs: &[f64], ys: &[f64], ss_tot: f64) -> Option<SymbolicEdge> {
    let my = mean(ys);
    match family {
        Family::Zero => {
            let e = SymbolicEdge { family, a: 0.0, b: 0.0, c: 0.0, d: my, r2: 0.0 };
            return Some(SymbolicEdge { r2: r2_of(sse(&e, xs, ys), ss_tot), ..e });
        }
        Family::Identity => {
            let (c, d) = ols(xs, ys)?;
            let e = SymbolicEdge { family, a: 1.0, b: 0.0, c, d, r2: 0.0 };
            return Some(SymbolicEdge { r2: r2_of(sse(&e, xs, ys), ss_tot), ..e });
        }
        _ => {}
    }
    // grid search in standardised input units, on at most 200 samples
    let mx = mean(xs);
    let sx = (xs.iter().map(|x| (x - mx) * (x - mx)).sum::<f64>() / xs.len() as f64).sqrt().max(1e-12);
    let stride = xs.len().div_ceil(200);
    let sub_x: Vec<f64> = xs.iter().step_by(stride).map(|x| (x - mx) / sx).collect();
    let sub_y: Vec<f64> = ys.iter().step_by(stride).copied().collect();
    let mut a_grid = Vec::new();
    for i in 0..9 {
        let m = 10f64.powf(-1.0 + i as f64 * 0.25);
        a_grid.extend([m, -m]);
    }
    let b_grid: Vec<f64> = (0..41).map(|i| -5.0 + i as f64 * 0.25).collect();
    let mut best: Option<(f64, SymbolicEdge)> = None;
    let mut u = vec![0.0; sub_x.len()];
    for &a in &a_grid {
        for &b in &b_grid {
            for (ui, x) in u.iter_mut().zip(&sub_x) {
                *ui = family.f(a * x + b);
            }
            let Some((c, d)) = ols(&u, &sub_y) else { continue };
            let s: f64 = u.iter().zip(&sub_y).map(|(ui, y)| (c * ui + d - y).powi(2)).sum();
            if s.is_finite() && best.as_ref().is_none_or(|(bs, _)| s < *bs) {
                // back to raw input units
                let e = SymbolicEdge { family, a: a / sx, b: b - a * mx / sx, c, d, r2: 0.0 };
                best = Some((s, e));
            }
        }
    }
    let (_, start) = best?;
    let fitted = refine(start, xs, ys, 100);
    let r2 = r2_of(sse(&fitted, xs, ys), ss_tot);
    r2.is_finite().then_some(SymbolicEdge { r2, ..fitted })
}

/// Picks the simplest candidate whose R² is within [`TIE_WINDOW`] of the best
/// and whose unexplained variance is less than twice the best's.
fn select(cands: &[SymbolicEdge]) -> Option<SymbolicEdge> {
    let best = cands.iter().copied().max_by(|x, y| x.r2.total_cmp(&y.r2))?;
    cands
        .iter()
        .copied()
        .filter(|c| best.r2 - c.r2 < TIE_WINDOW && (1.0 - c.r2 + 1e-6) < 2.0 * (1.0 - best.r2 + 1e-6))
        .min_by_key(|c| c.family)
        .or(Some(best))
}

/// Fits every library family to samples of one edge and picks by R² with a
/// preference for simpler families on near-ties.
pub fn fit_symbolic_edge(xs: &[f64], ys: &[f64], library: &[Family]) -> Result<SymbolicEdge> {
    if xs.len() != ys.len() {
        return Err(Error::Shape { expected: xs.len(), got: ys.len() });
    }
    if xs.len() < MIN_SAMPLES {
        return Err(Error::Data(format!("symbolic fit needs >= {MIN_SAMPLES} samples, got {}", xs.len())));
    }
    if library.is_empty() {
        return Err(Error::Config("symbolic library is empty".into()));
    }
    let my = mean(ys);
    let ss_tot: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    if ss_tot <= 1e-24 * (1.0 + my * my) * ys.len() as f64 {
        // a flat edge is its own constant
        return Ok(SymbolicEdge { family: Family::Zero, a: 0.0, b: 0.0, c: 0.0, d: my, r2: 1.0 });
    }
    let mut lib = library.to_vec();
    lib.sort();
    lib.dedup();
    let cands: Vec<SymbolicEdge> = lib.iter().filter_map(|f| fit_family(*f, xs, ys, ss_tot)).collect();
    Ok(select(&cands).unwrap_or(SymbolicEdge {
        family: Family::Zero,
        a: 0.0,
        b: 0.0,
        c: 0.0,
        d: my,
        r2: r2_of(ss_tot, ss_tot),
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeFit {
    pub layer: usize,
    pub from: usize,
    pub to: usize,
    pub family: Family,
    pub r2: f64,
}

/// Replaces every active edge by its best symbolic fit against the edge's
/// observed inputs and outputs on `x` (rows in the network's input space).
pub fn auto_symbolic(net: &mut KanNetwork, x: &[Vec<f64>], library: &[Family]) -> Result<Vec<EdgeFit>> {
    net.forward(x)?;
    let acts = net.layer_inputs(x);
    let mut jobs = Vec::new();
    for (l, layer) in net.layers.iter().enumerate() {
        for p in 0..layer.d_in {
            for q in 0..layer.d_out {
                if layer.edge(p, q).active {
                    jobs.push((l, p, q));
                }
            }
        }
    }
    let fits: Vec<Result<SymbolicEdge>> = jobs
        .par_iter()
        .map(|&(l, p, q)| {
            let layer = &net.layers[l];
            let e = layer.edge(p, q);
            let xs: Vec<f64> = acts[l].iter().map(|r| r[p]).collect();
            let ys: Vec<f64> = xs.iter().map(|v| e.forward(&layer.basis, *v)).collect();
            if ys.iter().any(|v| !v.is_finite()) {
                return Err(Error::Training(format!("edge ({l},{p},{q}) produces non-finite outputs")));
            }
            fit_symbolic_edge(&xs, &ys, library)
        })
        .collect();
    let mut report = Vec::new();
    for (&(l, p, q), fit) in jobs.iter().zip(fits) {
        let s = fit?;
        net.layers[l].edge_mut(p, q).symbolic = Some(s);
        report.push(EdgeFit { layer: l, from: p, to: q, family: s.family, r2: s.r2 });
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrainReport {
    pub mse_before: f64,
    pub mse_after: f64,
    pub iterations: usize,
}

/// Active symbolic edges as (layer, edge index).
fn symbolic_edges(net: &KanNetwork) -> Result<Vec<(usize, usize)>> {
    let mut out = Vec::new();
    for (l, layer) in net.layers.iter().enumerate() {
        for (i, e) in layer.edges.iter().enumerate() {
            if !e.active {
                continue;
            }
            if e.symbolic.is_none() {
                return Err(Error::Config(format!("edge {i} of layer {l} is active but not symbolic")));
            }
            out.push((l, i));
        }
    }
    Ok(out)
}

/// Residuals and the Jacobian of the prediction with respect to every
/// symbolic edge's (a, b, c, d), by reverse accumulation per row.
fn residuals_and_jacobian(
    net: &KanNetwork,
    edges: &[(usize, usize)],
    x: &[Vec<f64>],
    y: &[f64],
) -> (Vec<f64>, DMatrix<f64>) {
    let mut param_col = vec![Vec::new(); net.layers.len()];
    for (k, &(l, i)) in edges.iter().enumerate() {
        if param_col[l].is_empty() {
            param_col[l] = vec![usize::MAX; net.layers[l].edges.len()];
        }
        param_col[l][i] = 4 * k;
    }
    let mut jac = DMatrix::<f64>::zeros(x.len(), 4 * edges.len());
    let mut res = Vec::with_capacity(x.len());
    for (row, (xr, yr)) in x.iter().zip(y).enumerate() {
        let mut acts = vec![xr.clone()];
        for layer in &net.layers {
            let next = layer.forward_row(acts.last().expect("non-empty"));
            acts.push(next);
        }
        let out = net.out_bias + net.out_scale * acts.last().expect("non-empty")[0];
        res.push(out - yr);
        let mut g_next = vec![net.out_scale];
        for l in (0..net.layers.len()).rev() {
            let layer = &net.layers[l];
            let mut g_in = vec![0.0; layer.d_in];
            for p in 0..layer.d_in {
                for q in 0..layer.d_out {
                    let i = layer.index(p, q);
                    let e = &layer.edges[i];
                    if !e.active {
                        continue;
                    }
                    let s = e.symbolic.as_ref().expect("checked symbolic");
                    let xv = acts[l][p];
                    g_in[p] += g_next[q] * s.dx(xv);
                    let col = param_col[l][i];
                    for (k, dp) in s.dparams(xv).iter().enumerate() {
                        jac[(row, col + k)] = g_next[q] * dp;
                    }
                }
            }
            g_next = g_in;
        }
    }
    (res, jac)
}

fn write_params(net: &mut KanNetwork, edges: &[(usize, usize)], p: &[f64]) {
    for (k, &(l, i)) in edges.iter().enumerate() {
        let s = net.layers[l].edges[i].symbolic.as_mut().expect("checked symbolic");
        *s = s.with_params(&p[4 * k..4 * k + 4]);
    }
}

fn read_params(net: &KanNetwork, edges: &[(usize, usize)]) -> Vec<f64> {
    edges
        .iter()
        .flat_map(|&(l, i)| net.layers[l].edges[i].symbolic.as_ref().expect("checked symbolic").params())
        .collect()
}

fn mse_of(net: &KanNetwork, x: &[Vec<f64>], y: &[f64]) -> Result<f64> {
    let pred = net.forward(x)?;
    Ok(pred.iter().zip(y).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / y.len() as f64)
}

/// Refines every symbolic edge's affine parameters against end-to-end MSE
/// with the families held fixed. Steps that do not reduce the loss are
/// rejected, so the final MSE never exceeds the starting one.
pub fn retrain_affine(net: &mut KanNetwork, x: &[Vec<f64>], y: &[f64], iterations: usize) -> Result<RetrainReport> {
    if x.len() != y.len() {
        return Err(Error::Shape { expected: x.len(), got: y.len() });
    }
    let edges = symbolic_edges(net)?;
    let before = mse_of(net, x, y)?;
    if !before.is_finite() {
        return Err(Error::Training(format!(
            "non-finite loss before retraining at edge (layer, from, to) = {:?}",
            net.first_non_finite_edge(x)
        )));
    }
    // zero-family edges only carry d
    let frozen: Vec<bool> = edges
        .iter()
        .flat_map(|&(l, i)| {
            let zero = net.layers[l].edges[i].symbolic.as_ref().expect("checked symbolic").family == Family::Zero;
            [zero, zero, zero, false]
        })
        .collect();
    let mut params = read_params(net, &edges);
    let mut cur = before;
    let mut lambda = 1e-3;
    let mut done = 0;
    for _ in 0..iterations {
        done += 1;
        let (res, mut jac) = residuals_and_jacobian(net, &edges, x, y);
        for (k, f) in frozen.iter().enumerate() {
            if *f {
                jac.column_mut(k).fill(0.0);
            }
        }
        let jt = jac.transpose();
        let jtj = &jt * &jac;
        let jtr = &jt * DVector::from_vec(res);
        let mut improved = false;
        while lambda < 1e14 {
            let mut m = jtj.clone();
            for i in 0..m.nrows() {
                m[(i, i)] += lambda * (jtj[(i, i)] + 1e-9);
            }
            let Some(step) = m.lu().solve(&(-&jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let cand: Vec<f64> = params.iter().zip(step.iter()).map(|(p, s)| p + s).collect();
            write_params(net, &edges, &cand);
            let cand_mse = mse_of(net, x, y)?;
            if cand_mse.is_finite() && cand_mse < cur {
                improved = cur - cand_mse > 1e-15 * cur.max(1e-300);
                params = cand;
                cur = cand_mse;
                lambda = (lambda / 3.0).max(1e-15);
                break;
            }
            write_params(net, &edges, &params);
            lambda *= 4.0;
        }
        if !improved {
            break;
        }
    }
    write_params(net, &edges, &params);
    Ok(RetrainReport { mse_before: before, mse_after: cur, iterations: done })
}

/// Composes a fully symbolic network into one expression over the raw input
/// variables. Normalisation divisors are folded into the first layer's
/// inner affine and the output affine wraps the result.
pub fn extract_expression(net: &KanNetwork) -> Result<ExpressionTree> {
    if !net.is_fully_symbolic() {
        return Err(Error::Config("every active edge must be symbolic before extraction".into()));
    }
    let last = net.layers.len();
    if net.disconnected_nodes().contains(&(last, 0)) {
        return Err(Error::Config("output node is disconnected".into()));
    }
    let mut nodes: Vec<Vec<Token>> = (0..net.n_inputs()).map(|p| vec![Token::Var(p)]).collect();
    for (l, layer) in net.layers.iter().enumerate() {
        let mut next = Vec::with_capacity(layer.d_out);
        for q in 0..layer.d_out {
            let mut terms: Vec<Vec<Token>> = Vec::new();
            for p in 0..layer.d_in {
                let e = layer.edge(p, q);
                if !e.active {
                    continue;
                }
                let s = e.symbolic.as_ref().expect("checked symbolic");
                let scale = match (&net.norm, l) {
                    (Some(m), 0) => m[p],
                    _ => 1.0,
                };
                terms.push(s.to_tokens(nodes[p].clone(), scale));
            }
            let mut it = terms.into_iter();
            let mut acc = it.next().unwrap_or_else(|| vec![Token::Lit(0.0)]);
            for t in it {
                let mut sum = vec![Token::Add];
                sum.extend(acc);
                sum.extend(t);
                acc = sum;
            }
            next.push(acc);
        }
        nodes = next;
    }
    let mut out = vec![Token::Add, Token::Mul, Token::Lit(net.out_scale)];
    out.extend(nodes.swap_remove(0));
    out.push(Token::Lit(net.out_bias));
    ExpressionTree::new(out)
}
