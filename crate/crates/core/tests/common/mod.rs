//! Reference implementations written independently of the library, used as
//! oracles by the integration tests.

#![allow(dead_code)]

use autopl::expr::Token;

pub const C: f64 = 299_792_458.0;

/// Free-space loss at 1 m via the natural log.
pub fn fspl_1m(f_hz: f64) -> f64 {
    20.0 / std::f64::consts::LN_10 * (4.0 * std::f64::consts::PI * f_hz / C).ln()
}

pub fn abg(alpha: f64, beta: f64, gamma: f64, f_ghz: f64, d_m: f64, chi: f64) -> f64 {
    alpha * 10.0 * d_m.ln() / std::f64::consts::LN_10 + beta + gamma * 10.0 * f_ghz.ln() / std::f64::consts::LN_10 + chi
}

pub fn ci(f_hz: f64, n: f64, d_m: f64, chi: f64) -> f64 {
    fspl_1m(f_hz) + n * 10.0 * d_m.ln() / std::f64::consts::LN_10 + chi
}

/// Indoor empirical model with its fitted LoRaWAN constants.
pub fn indoor(d: f64, nw: f64, nf: f64) -> f64 {
    let (n, pl0, b, lf, lw) = (2.85, 120.4, 0.47, 10.0, 1.41);
    let e = (nf + 2.0) / (nf + 1.0) - b;
    n * 10.0 * d.ln() / std::f64::consts::LN_10 + pl0 + nw * lw + (e * nf.ln()).exp() * lf
}

pub fn mwf(d: f64, nw: f64, nf: f64) -> f64 {
    2.85 * 10.0 * d.ln() / std::f64::consts::LN_10 + 120.4 + nw * 1.41 + nf * 10.0
}

pub fn outdoor(d: f64, h: f64, x: f64) -> f64 {
    3.119 * 10.0 * d.ln() / std::f64::consts::LN_10 + 140.7 - 4.7 * h.ln() / std::f64::consts::LN_10 + x
}

pub fn mae(p: &[f64], y: &[f64]) -> f64 {
    p.iter().zip(y).map(|(a, b)| (a - b).abs()).sum::<f64>() / y.len() as f64
}

pub fn mse(p: &[f64], y: &[f64]) -> f64 {
    p.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64
}

/// Mean absolute percentage error, in percent.
pub fn mape(p: &[f64], y: &[f64]) -> f64 {
    100.0 * p.iter().zip(y).map(|(a, b)| ((b - a) / b).abs()).sum::<f64>() / y.len() as f64
}

pub fn r2(p: &[f64], y: &[f64]) -> f64 {
    let m = y.iter().sum::<f64>() / y.len() as f64;
    let ss_res: f64 = p.iter().zip(y).map(|(a, b)| (b - a).powi(2)).sum();
    let ss_tot: f64 = y.iter().map(|b| (b - m).powi(2)).sum();
    1.0 - ss_res / ss_tot
}

/// Expression tree rebuilt from pre-order tokens by plain recursion.
#[derive(Debug, Clone)]
pub struct Node {
    pub token: Token,
    pub children: Vec<Node>,
}

/// Parses a prefix of `tokens`; returns the tree and the tokens consumed.
pub fn build(tokens: &[Token]) -> Option<(Node, usize)> {
    let (&t, _) = tokens.split_first()?;
    let mut used = 1;
    let mut children = Vec::new();
    for _ in 0..t.arity() {
        let (c, n) = build(&tokens[used..])?;
        used += n;
        children.push(c);
    }
    Some((Node { token: t, children }, used))
}

/// True when `tokens` is exactly one complete tree.
pub fn complete(tokens: &[Token]) -> bool {
    matches!(build(tokens), Some((_, n)) if n == tokens.len())
}

fn is_const_leaf(n: &Node) -> bool {
    matches!(n.token, Token::Const | Token::Lit(_))
}

fn is_trig(t: Token) -> bool {
    matches!(t, Token::Sin | Token::Cos)
}

fn inverse_pair(a: Token, b: Token) -> bool {
    matches!(
        (a, b),
        (Token::Log10, Token::Exp)
            | (Token::Exp, Token::Log10)
            | (Token::Square, Token::Sqrt)
            | (Token::Sqrt, Token::Square)
    )
}

fn walk(n: &Node, under_trig: bool, out: &mut Vec<String>) {
    if !n.children.is_empty() && n.children.iter().all(is_const_leaf) {
        out.push(format!("{:?} has only constant children", n.token));
    }
    if n.children.len() == 1 && inverse_pair(n.token, n.children[0].token) {
        out.push(format!("{:?} wraps its inverse", n.token));
    }
    if under_trig && is_trig(n.token) {
        out.push("trig below trig".into());
    }
    for c in &n.children {
        walk(c, under_trig || is_trig(n.token), out);
    }
}

/// Hard-constraint violations found by walking the rebuilt tree.
pub fn violations(tokens: &[Token], min_len: usize, max_len: usize, max_counts: &[(Token, usize)]) -> Vec<String> {
    let mut out = Vec::new();
    if tokens.len() < min_len || tokens.len() > max_len {
        out.push(format!("length {}", tokens.len()));
    }
    match build(tokens) {
        Some((tree, n)) if n == tokens.len() => walk(&tree, false, &mut out),
        _ => out.push("not a single complete tree".into()),
    }
    for (t, max) in max_counts {
        let c = tokens.iter().filter(|u| *u == t).count();
        if c > *max {
            out.push(format!("{t:?} occurs {c} times"));
        }
    }
    out
}
