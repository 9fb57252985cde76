use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::token::{Token, Vocabulary};
use crate::{Error, Result};

/// Occurrence bounds for a single token. `min` is soft (penalised at reward
/// time), `max` is hard (masked during sampling).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatBound {
    pub token: Token,
    #[serde(default)]
    pub min: usize,
    #[serde(default)]
    pub max: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConstraintSet {
    pub min_len: usize,
    pub max_len: usize,
    pub no_all_const_children: bool,
    pub no_inverse_unary_child: bool,
    pub no_nested_trig: bool,
    pub repeat: Vec<RepeatBound>,
    /// Weight `w` in the soft-minimum penalty `(1 - w)^deficit`.
    pub soft_weight: f64,
}

impl Default for ConstraintSet {
    fn default() -> Self {
        ConstraintSet {
            min_len: 4,
            max_len: 40,
            no_all_const_children: true,
            no_inverse_unary_child: true,
            no_nested_trig: true,
            repeat: Vec::new(),
            soft_weight: 0.5,
        }
    }
}

impl ConstraintSet {
    pub fn validate(&self) -> Result<()> {
        if self.min_len == 0 || self.min_len > self.max_len {
            return Err(Error::Config(format!(
                "need 1 <= min_len <= max_len, got min_len={} max_len={}",
                self.min_len, self.max_len
            )));
        }
        if !(0.0..=1.0).contains(&self.soft_weight) {
            return Err(Error::Config(format!("soft_weight must lie in [0, 1], got {}", self.soft_weight)));
        }
        for b in &self.repeat {
            if b.max.is_some_and(|m| m < b.min) {
                return Err(Error::Config(format!("repeat bound for {} has max < min", b.token.name())));
            }
        }
        Ok(())
    }

    fn hard_max(&self, t: &Token) -> Option<usize> {
        self.repeat.iter().filter(|b| b.token == *t).filter_map(|b| b.max).min()
    }
}

pub fn count_token(tokens: &[Token], t: &Token) -> usize {
    tokens.iter().filter(|x| *x == t).count()
}

/// Multiplicative reward factor for unmet soft minima: `(1 - w)^deficit`.
pub fn repeat_penalty(tokens: &[Token], cs: &ConstraintSet) -> f64 {
    let deficit: usize = cs.repeat.iter().map(|b| b.min.saturating_sub(count_token(tokens, &b.token))).sum();
    (1.0 - cs.soft_weight).powi(deficit as i32)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Slot {
    parent: Option<usize>,
    child: usize,
    under_trig: bool,
}

/// Incremental view of a partial pre-order sequence: the pending slots and
/// per-token counts needed to build the next-token mask.
#[derive(Debug, Clone, Default)]
pub struct PrefixState {
    tokens: Vec<Token>,
    // top of stack is the slot the next token fills
    slots: Vec<Slot>,
    counts: HashMap<Token, usize>,
}

impl PrefixState {
    pub fn new() -> Self {
        PrefixState {
            tokens: Vec::new(),
            slots: vec![Slot { parent: None, child: 0, under_trig: false }],
            counts: HashMap::new(),
        }
    }

    pub fn from_tokens(tokens: &[Token]) -> Result<Self> {
        let mut s = PrefixState::new();
        for t in tokens {
            s.push(*t)?;
        }
        Ok(s)
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn open_slots(&self) -> usize {
        self.slots.len()
    }

    pub fn is_complete(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn push(&mut self, t: Token) -> Result<()> {
        let slot = self.slots.pop().ok_or_else(|| Error::Expression("cannot extend a complete sequence".into()))?;
        let pos = self.tokens.len();
        self.tokens.push(t);
        *self.counts.entry(t).or_default() += 1;
        let under_trig = slot.under_trig || t.is_trig();
        for child in (0..t.arity()).rev() {
            self.slots.push(Slot { parent: Some(pos), child, under_trig });
        }
        Ok(())
    }

    /// Parent and sibling of the position about to be generated. The sibling is
    /// the already-complete left subtree when filling a second child.
    pub fn parent_and_sibling(&self) -> (Option<Token>, Option<Token>) {
        match self.slots.last() {
            Some(Slot { parent: Some(p), child, .. }) => {
                let sibling = if *child == 1 { Some(self.tokens[p + 1]) } else { None };
                (Some(self.tokens[*p]), sibling)
            }
            _ => (None, None),
        }
    }

    /// Next-token mask. Errors with [`Error::DeadEnd`] when nothing is allowed.
    pub fn mask(&self, vocab: &Vocabulary, cs: &ConstraintSet) -> Result<Vec<bool>> {
        let slot = *self.slots.last().ok_or_else(|| Error::Expression("sequence is already complete".into()))?;
        let parent = slot.parent.map(|p| self.tokens[p]);
        let first_sibling_const = slot.child == 1 && slot.parent.is_some_and(|p| self.tokens[p + 1].is_constant());
        let len_after = self.tokens.len() + 1;
        let open = self.slots.len();

        let mask: Vec<bool> = vocab
            .tokens
            .iter()
            .map(|t| {
                let open_after = open - 1 + t.arity();
                // every open slot needs at least one more token
                if len_after + open_after > cs.max_len {
                    return false;
                }
                if open_after == 0 && len_after < cs.min_len {
                    return false;
                }
                if cs.no_all_const_children
                    && t.is_constant()
                    && (parent.is_some_and(|p| p.arity() == 1) || first_sibling_const)
                {
                    return false;
                }
                if cs.no_inverse_unary_child && parent.is_some_and(|p| p.arity() == 1 && p.inverse() == Some(*t)) {
                    return false;
                }
                if cs.no_nested_trig && t.is_trig() && slot.under_trig {
                    return false;
                }
                if let Some(max) = cs.hard_max(t) {
                    if self.counts.get(t).copied().unwrap_or(0) >= max {
                        return false;
                    }
                }
                true
            })
            .collect();
        if mask.iter().any(|m| *m) {
            Ok(mask)
        } else {
            Err(Error::DeadEnd(self.tokens.len()))
        }
    }
}

/// Mask for the token following `prefix`.
pub fn valid_next_tokens(prefix: &[Token], vocab: &Vocabulary, cs: &ConstraintSet) -> Result<Vec<bool>> {
    PrefixState::from_tokens(prefix)?.mask(vocab, cs)
}

/// Every hard-constraint violation in a complete sequence, as readable strings.
pub fn hard_violations(tokens: &[Token], cs: &ConstraintSet) -> Vec<String> {
    let mut out = Vec::new();
    if tokens.len() < cs.min_len || tokens.len() > cs.max_len {
        out.push(format!("length {} outside [{}, {}]", tokens.len(), cs.min_len, cs.max_len));
    }
    let mut state = PrefixState::new();
    for (i, t) in tokens.iter().enumerate() {
        let Some(slot) = state.slots.last().copied() else {
            out.push("tokens after completion".into());
            break;
        };
        let parent = slot.parent.map(|p| tokens[p]);
        if cs.no_all_const_children && t.is_constant() {
            if parent.is_some_and(|p| p.arity() == 1) {
                out.push(format!("constant child of unary at {i}"));
            }
            if slot.child == 1 && slot.parent.is_some_and(|p| tokens[p + 1].is_constant()) {
                out.push(format!("binary with two constant leaves at {i}"));
            }
        }
        if cs.no_inverse_unary_child && parent.is_some_and(|p| p.arity() == 1 && p.inverse() == Some(*t)) {
            out.push(format!("inverse child at {i}"));
        }
        if cs.no_nested_trig && t.is_trig() && slot.under_trig {
            out.push(format!("nested trig at {i}"));
        }
        state.push(*t).expect("slot checked above");
    }
    if !state.is_complete() {
        out.push("incomplete".into());
    }
    for b in &cs.repeat {
        if let Some(max) = b.max {
            let c = count_token(tokens, &b.token);
            if c > max {
                out.push(format!("{} occurs {c} times, max {max}", b.token.name()));
            }
        }
    }
    out
}
