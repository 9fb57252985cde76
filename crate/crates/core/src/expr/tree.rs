use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::token::Token;
use crate::{Error, Result};

/// True iff `tokens` is one complete pre-order expression: the open-slot
/// count `1 + sum(arity - 1)` hits zero exactly at the last token.
pub fn is_complete(tokens: &[Token]) -> bool {
    let mut open: i64 = 1;
    for (i, t) in tokens.iter().enumerate() {
        open += t.arity() as i64 - 1;
        if open == 0 {
            return i + 1 == tokens.len();
        }
    }
    false
}

/// A complete pre-order token sequence plus one value per placeholder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpressionTree {
    tokens: Vec<Token>,
    constants: Vec<f64>,
}

/// Feature matrix stored column-major for repeated evaluation.
#[derive(Debug, Clone)]
pub struct Columns {
    cols: Vec<Vec<f64>>,
    n_rows: usize,
}

impl Columns {
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let width = rows.first().map_or(0, Vec::len);
        let cols = (0..width).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
        Columns { cols, n_rows: rows.len() }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.cols.len()
    }

    pub fn col(&self, j: usize) -> &[f64] {
        &self.cols[j]
    }
}

fn finite_or_nan(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        f64::NAN
    }
}

impl ExpressionTree {
    /// Builds a tree with every placeholder initialised to 1.0.
    pub fn new(tokens: Vec<Token>) -> Result<Self> {
        let n = tokens.iter().filter(|t| matches!(t, Token::Const)).count();
        Self::with_constants(tokens, vec![1.0; n])
    }

    pub fn with_constants(tokens: Vec<Token>, constants: Vec<f64>) -> Result<Self> {
        if !is_complete(&tokens) {
            return Err(Error::Expression(format!("token sequence is not complete: {tokens:?}")));
        }
        let n = tokens.iter().filter(|t| matches!(t, Token::Const)).count();
        if constants.len() != n {
            return Err(Error::Expression(format!("{n} placeholders but {} constants", constants.len())));
        }
        Ok(ExpressionTree { tokens, constants })
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn constants(&self) -> &[f64] {
        &self.constants
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn n_placeholders(&self) -> usize {
        self.constants.len()
    }

    pub fn set_constants(&mut self, constants: Vec<f64>) -> Result<()> {
        if constants.len() != self.constants.len() {
            return Err(Error::Expression(format!(
                "{} placeholders but {} constants",
                self.constants.len(),
                constants.len()
            )));
        }
        self.constants = constants;
        Ok(())
    }

    /// Largest variable index + 1, or 0 for constant expressions.
    pub fn min_features(&self) -> usize {
        self.tokens.iter().filter_map(|t| if let Token::Var(i) = t { Some(i + 1) } else { None }).max().unwrap_or(0)
    }

    /// Row-wise evaluation. Rows where any intermediate is non-finite yield NaN.
    pub fn evaluate(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        if let Some(bad) = rows.iter().find(|r| r.len() < self.min_features()) {
            return Err(Error::Shape { expected: self.min_features(), got: bad.len() });
        }
        Ok(self.evaluate_columns(&Columns::from_rows(rows), &self.constants))
    }

    /// Evaluates with substitute placeholder values. Panics if a variable
    /// index is out of range for `x`.
    pub fn evaluate_columns(&self, x: &Columns, constants: &[f64]) -> Vec<f64> {
        let mut pos = 0;
        let mut next_const = 0;
        self.eval_node(x, constants, &mut pos, &mut next_const)
    }

    fn eval_node(&self, x: &Columns, constants: &[f64], pos: &mut usize, next_const: &mut usize) -> Vec<f64> {
        let tok = self.tokens[*pos];
        *pos += 1;
        let n = x.n_rows();
        match tok.arity() {
            0 => match tok {
                Token::Var(i) => x.col(i).to_vec(),
                Token::Const => {
                    let c = constants[*next_const];
                    *next_const += 1;
                    vec![finite_or_nan(c); n]
                }
                Token::Lit(v) => vec![finite_or_nan(v); n],
                _ => unreachable!(),
            },
            1 => {
                let mut a = self.eval_node(x, constants, pos, next_const);
                for v in a.iter_mut() {
                    *v = finite_or_nan(tok.apply_unary(*v));
                }
                a
            }
            _ => {
                let mut a = self.eval_node(x, constants, pos, next_const);
                let b = self.eval_node(x, constants, pos, next_const);
                for (u, v) in a.iter_mut().zip(b) {
                    *u = finite_or_nan(tok.apply_binary(*u, v));
                }
                a
            }
        }
    }

    /// Rewrites an expression over max-normalised inputs into one over raw
    /// inputs by replacing each `x<i>` with `x<i> / divisors[i]`.
    pub fn with_scaled_inputs(&self, divisors: &[f64]) -> ExpressionTree {
        let mut tokens = Vec::with_capacity(self.tokens.len());
        for t in &self.tokens {
            match t {
                Token::Var(i) if divisors.get(*i).is_some_and(|m| *m != 1.0) => {
                    tokens.extend([Token::Div, *t, Token::Lit(divisors[*i])]);
                }
                _ => tokens.push(*t),
            }
        }
        ExpressionTree { tokens, constants: self.constants.clone() }
    }

    /// Fully parenthesised infix with variables rendered as `x<i>`.
    pub fn to_infix(&self) -> String {
        self.to_infix_named(&[])
    }

    /// Like [`ExpressionTree::to_infix`] but uses `names[i]` for variable `i` when available.
    pub fn to_infix_named(&self, names: &[String]) -> String {
        let mut pos = 0;
        let mut next_const = 0;
        self.infix_node(names, &mut pos, &mut next_const)
    }

    fn infix_node(&self, names: &[String], pos: &mut usize, next_const: &mut usize) -> String {
        let tok = self.tokens[*pos];
        *pos += 1;
        match tok {
            Token::Var(i) => names.get(i).cloned().unwrap_or_else(|| format!("x{i}")),
            Token::Const => {
                let c = self.constants[*next_const];
                *next_const += 1;
                format_sig(c, 4)
            }
            Token::Lit(v) => format_sig(v, 4),
            Token::Add | Token::Sub | Token::Mul | Token::Div => {
                let a = self.infix_node(names, pos, next_const);
                let b = self.infix_node(names, pos, next_const);
                let op = match tok {
                    Token::Add => "+",
                    Token::Sub => "-",
                    Token::Mul => "*",
                    _ => "/",
                };
                format!("({a} {op} {b})")
            }
            Token::Square => format!("({})^2", self.infix_node(names, pos, next_const)),
            Token::Cube => format!("({})^3", self.infix_node(names, pos, next_const)),
            unary => format!("{}({})", unary.name(), self.infix_node(names, pos, next_const)),
        }
    }

    /// Variables used anywhere, and variables appearing below a sin/cos.
    pub fn structural_scan(&self) -> StructuralScan {
        let mut scan = StructuralScan::default();
        // stack of "remaining children, under trig" for each open operator
        let mut stack: Vec<(usize, bool)> = Vec::new();
        for tok in &self.tokens {
            let under_trig = stack.last().is_some_and(|s| s.1);
            if let Token::Var(i) = tok {
                scan.variables_used.insert(*i);
                if under_trig {
                    scan.trig_over.insert(*i);
                }
            }
            if tok.arity() > 0 {
                stack.push((tok.arity(), under_trig || tok.is_trig()));
            } else {
                while let Some(top) = stack.last_mut() {
                    top.0 -= 1;
                    if top.0 == 0 {
                        stack.pop();
                    } else {
                        break;
                    }
                }
            }
        }
        scan
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuralScan {
    pub variables_used: BTreeSet<usize>,
    pub trig_over: BTreeSet<usize>,
}

/// Renders `v` with `sig` significant digits, trailing zeros trimmed.
pub fn format_sig(v: f64, sig: usize) -> String {
    if !v.is_finite() {
        return format!("{v}");
    }
    if v == 0.0 {
        return "0".into();
    }
    let mag = v.abs().log10().floor() as i32;
    if !(-4..sig as i32).contains(&mag) {
        let s = format!("{:.*e}", sig.saturating_sub(1), v);
        let (mant, exp) = s.split_once('e').expect("scientific format");
        return format!("{}e{}", trim_zeros(mant), exp);
    }
    let decimals = (sig as i32 - 1 - mag).max(0) as usize;
    trim_zeros(&format!("{:.*}", decimals, v))
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

/// Serialized form: canonical tokens and constants, plus an infix rendering
/// for people. The infix string is never parsed back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpressionRecord {
    pub tokens: Vec<Token>,
    pub constants: Vec<f64>,
    #[serde(default)]
    pub infix: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub variables: Vec<String>,
}

impl ExpressionRecord {
    pub fn from_tree(tree: &ExpressionTree, variables: &[String]) -> Self {
        ExpressionRecord {
            tokens: tree.tokens.clone(),
            constants: tree.constants.clone(),
            infix: tree.to_infix_named(variables),
            variables: variables.to_vec(),
        }
    }

    pub fn to_tree(&self) -> Result<ExpressionTree> {
        ExpressionTree::with_constants(self.tokens.clone(), self.constants.clone())
    }
}
