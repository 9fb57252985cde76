use super::token::Token;
use super::tree::{Columns, ExpressionTree};

fn finite_or_nan(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        f64::NAN
    }
}

enum Val<'a> {
    Scalar(f64),
    Slice(&'a [f64]),
    Owned(Vec<f64>),
}

impl Val<'_> {
    fn into_vec(self, n: usize) -> Vec<f64> {
        match self {
            Val::Scalar(c) => vec![c; n],
            Val::Slice(s) => s.to_vec(),
            Val::Owned(v) => v,
        }
    }
}

/// Evaluation plan for repeated calls with different placeholder values.
/// Every subtree without placeholders is evaluated once up front, and
/// scalar subtrees are never broadcast. Results are bit-identical to
/// [`ExpressionTree::evaluate_columns`].
pub struct PreparedTree<'a> {
    tokens: &'a [Token],
    x: &'a Columns,
    /// Index one past the last token of the subtree starting at each position.
    ends: Vec<usize>,
    /// Cached values of placeholder-free subtrees, by start position.
    cached: Vec<Option<Vec<f64>>>,
}

impl<'a> PreparedTree<'a> {
    pub fn new(tree: &'a ExpressionTree, x: &'a Columns) -> Self {
        let tokens = tree.tokens();
        let n = tokens.len();
        let mut ends = vec![0; n];
        let mut has_const = vec![false; n];
        // right-to-left stack pass gives each subtree's extent
        let mut stack: Vec<usize> = Vec::new();
        for i in (0..n).rev() {
            let t = tokens[i];
            let mut end = i + 1;
            let mut c = t == Token::Const;
            for _ in 0..t.arity() {
                let child = stack.pop().expect("complete tree");
                end = end.max(ends[child]);
                c |= has_const[child];
            }
            ends[i] = end;
            has_const[i] = c;
            stack.push(i);
        }
        let mut prepared = PreparedTree { tokens, x, ends, cached: vec![None; n] };
        let mut i = 0;
        while i < n {
            if !has_const[i] && !tokens[i].is_leaf() {
                let sub = ExpressionTree::new(tokens[i..prepared.ends[i]].to_vec()).expect("complete subtree");
                prepared.cached[i] = Some(sub.evaluate_columns(x, &[]));
                i = prepared.ends[i];
            } else {
                i += 1;
            }
        }
        prepared
    }

    pub fn evaluate(&self, constants: &[f64]) -> Vec<f64> {
        let mut next = 0;
        self.node(0, constants, &mut next).into_vec(self.x.n_rows())
    }

    fn node(&self, pos: usize, constants: &[f64], next: &mut usize) -> Val<'_> {
        if let Some(v) = &self.cached[pos] {
            return Val::Slice(v);
        }
        let tok = self.tokens[pos];
        match tok.arity() {
            0 => match tok {
                Token::Var(i) => Val::Slice(self.x.col(i)),
                Token::Const => {
                    let c = constants[*next];
                    *next += 1;
                    Val::Scalar(finite_or_nan(c))
                }
                Token::Lit(v) => Val::Scalar(finite_or_nan(v)),
                _ => unreachable!(),
            },
            1 => match self.node(pos + 1, constants, next) {
                Val::Scalar(c) => Val::Scalar(finite_or_nan(tok.apply_unary(c))),
                v => {
                    let mut a = v.into_vec(self.x.n_rows());
                    a.iter_mut().for_each(|u| *u = finite_or_nan(tok.apply_unary(*u)));
                    Val::Owned(a)
                }
            },
            _ => {
                let a = self.node(pos + 1, constants, next);
                let b = self.node(self.ends[pos + 1], constants, next);
                let f = |u: f64, v: f64| finite_or_nan(tok.apply_binary(u, v));
                match (a, b) {
                    (Val::Scalar(u), Val::Scalar(v)) => Val::Scalar(f(u, v)),
                    (Val::Scalar(u), b) => {
                        let mut b = b.into_vec(self.x.n_rows());
                        b.iter_mut().for_each(|v| *v = f(u, *v));
                        Val::Owned(b)
                    }
                    (a, Val::Scalar(v)) => {
                        let mut a = a.into_vec(self.x.n_rows());
                        a.iter_mut().for_each(|u| *u = f(*u, v));
                        Val::Owned(a)
                    }
                    (a, b) => {
                        let mut a = a.into_vec(self.x.n_rows());
                        let b = match &b {
                            Val::Slice(s) => *s,
                            Val::Owned(v) => v.as_slice(),
                            Val::Scalar(_) => unreachable!(),
                        };
                        a.iter_mut().zip(b).for_each(|(u, v)| *u = f(*u, *v));
                        Val::Owned(a)
                    }
                }
            }
        }
    }
}
