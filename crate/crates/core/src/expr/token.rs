use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One symbol of a pre-order expression.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(tag = "op", content = "arg", rename_all = "snake_case")]
pub enum Token {
    Add,
    Sub,
    Mul,
    Div,
    Log10,
    Exp,
    Sin,
    Cos,
    Sqrt,
    Square,
    Cube,
    /// Feature column index.
    Var(usize),
    /// Placeholder whose value is fitted per expression.
    Const,
    /// Fixed numeric leaf.
    Lit(f64),
}

impl PartialEq for Token {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Token::Var(a), Token::Var(b)) => a == b,
            (Token::Lit(a), Token::Lit(b)) => a.to_bits() == b.to_bits(),
            _ => std::mem::discriminant(self) == std::mem::discriminant(other),
        }
    }
}

impl Eq for Token {}

impl Hash for Token {
    fn hash<H: Hasher>(&self, state: &mut H) {
        std::mem::discriminant(self).hash(state);
        match self {
            Token::Var(i) => i.hash(state),
            Token::Lit(v) => v.to_bits().hash(state),
            _ => {}
        }
    }
}

impl Token {
    pub fn arity(&self) -> usize {
        match self {
            Token::Add | Token::Sub | Token::Mul | Token::Div => 2,
            Token::Log10 | Token::Exp | Token::Sin | Token::Cos | Token::Sqrt | Token::Square | Token::Cube => 1,
            Token::Var(_) | Token::Const | Token::Lit(_) => 0,
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.arity() == 0
    }

    pub fn is_trig(&self) -> bool {
        matches!(self, Token::Sin | Token::Cos)
    }

    /// Placeholder or literal: a leaf that does not depend on the data.
    pub fn is_constant(&self) -> bool {
        matches!(self, Token::Const | Token::Lit(_))
    }

    /// Unary operator that undoes this one. `exp` and `log10` are paired even
    /// though their bases differ.
    pub fn inverse(&self) -> Option<Token> {
        match self {
            Token::Log10 => Some(Token::Exp),
            Token::Exp => Some(Token::Log10),
            Token::Sqrt => Some(Token::Square),
            Token::Square => Some(Token::Sqrt),
            _ => None,
        }
    }

    pub fn apply_unary(&self, x: f64) -> f64 {
        match self {
            Token::Log10 => x.log10(),
            Token::Exp => x.exp(),
            Token::Sin => x.sin(),
            Token::Cos => x.cos(),
            Token::Sqrt => x.sqrt(),
            Token::Square => x * x,
            Token::Cube => x * x * x,
            _ => unreachable!("not a unary operator: {self:?}"),
        }
    }

    pub fn apply_binary(&self, a: f64, b: f64) -> f64 {
        match self {
            Token::Add => a + b,
            Token::Sub => a - b,
            Token::Mul => a * b,
            Token::Div => a / b,
            _ => unreachable!("not a binary operator: {self:?}"),
        }
    }

    /// Short name used in vocab listings and config files.
    pub fn name(&self) -> String {
        match self {
            Token::Add => "add".into(),
            Token::Sub => "sub".into(),
            Token::Mul => "mul".into(),
            Token::Div => "div".into(),
            Token::Log10 => "log10".into(),
            Token::Exp => "exp".into(),
            Token::Sin => "sin".into(),
            Token::Cos => "cos".into(),
            Token::Sqrt => "sqrt".into(),
            Token::Square => "square".into(),
            Token::Cube => "cube".into(),
            Token::Var(i) => format!("x{i}"),
            Token::Const => "const".into(),
            Token::Lit(v) => format!("{v}"),
        }
    }

    /// Inverse of [`Token::name`]; variables are `x<i>`.
    pub fn parse(s: &str) -> Result<Token> {
        let t = match s {
            "add" | "+" => Token::Add,
            "sub" | "-" => Token::Sub,
            "mul" | "*" => Token::Mul,
            "div" | "/" => Token::Div,
            "log10" => Token::Log10,
            "exp" => Token::Exp,
            "sin" => Token::Sin,
            "cos" => Token::Cos,
            "sqrt" => Token::Sqrt,
            "square" => Token::Square,
            "cube" => Token::Cube,
            "const" => Token::Const,
            _ => {
                if let Some(i) = s.strip_prefix('x').and_then(|r| r.parse::<usize>().ok()) {
                    Token::Var(i)
                } else if let Ok(v) = s.parse::<f64>() {
                    Token::Lit(v)
                } else {
                    return Err(Error::Parse(format!("unknown token '{s}'")));
                }
            }
        };
        Ok(t)
    }
}

/// Ordered token set the policy samples from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub tokens: Vec<Token>,
}

/// Switches for building a [`Vocabulary`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VocabularyConfig {
    pub arithmetic: bool,
    pub log10: bool,
    pub exp: bool,
    pub trig: bool,
    pub square: bool,
    pub sqrt: bool,
    pub constant: bool,
    /// Integer literals `1..=max_literal`; 0 disables them.
    pub max_literal: u32,
}

impl Default for VocabularyConfig {
    fn default() -> Self {
        VocabularyConfig {
            arithmetic: true,
            log10: true,
            exp: true,
            trig: true,
            square: true,
            sqrt: false,
            constant: true,
            max_literal: 10,
        }
    }
}

impl Vocabulary {
    pub fn new(tokens: Vec<Token>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::Config("vocabulary is empty".into()));
        }
        if !tokens.iter().any(Token::is_leaf) {
            return Err(Error::Config("vocabulary has no leaf tokens".into()));
        }
        for (i, t) in tokens.iter().enumerate() {
            if tokens[..i].contains(t) {
                return Err(Error::Config(format!("duplicate token {t:?} in vocabulary")));
            }
        }
        Ok(Vocabulary { tokens })
    }

    pub fn build(n_vars: usize, cfg: &VocabularyConfig) -> Result<Self> {
        let mut t = Vec::new();
        if cfg.arithmetic {
            t.extend([Token::Add, Token::Sub, Token::Mul, Token::Div]);
        }
        if cfg.log10 {
            t.push(Token::Log10);
        }
        if cfg.exp {
            t.push(Token::Exp);
        }
        if cfg.trig {
            t.extend([Token::Sin, Token::Cos]);
        }
        if cfg.square {
            t.push(Token::Square);
        }
        if cfg.sqrt {
            t.push(Token::Sqrt);
        }
        t.extend((0..n_vars).map(Token::Var));
        if cfg.constant {
            t.push(Token::Const);
        }
        t.extend((1..=cfg.max_literal).map(|v| Token::Lit(v as f64)));
        Vocabulary::new(t)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn index_of(&self, t: &Token) -> Option<usize> {
        self.tokens.iter().position(|x| x == t)
    }

    pub fn get(&self, i: usize) -> Token {
        self.tokens[i]
    }
}
