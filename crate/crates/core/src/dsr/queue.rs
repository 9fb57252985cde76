use serde::{Deserialize, Serialize};

use crate::expr::Token;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueEntry {
    pub reward: f64,
    pub tokens: Vec<Token>,
}

/// Top-k sequences by reward, deduplicated by token sequence. Entries are
/// kept sorted by descending reward; ties keep insertion order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxRewardQueue {
    capacity: usize,
    entries: Vec<QueueEntry>,
}

impl MaxRewardQueue {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "queue capacity must be >= 1");
        MaxRewardQueue { capacity, entries: Vec::with_capacity(capacity) }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[QueueEntry] {
        &self.entries
    }

    pub fn min_reward(&self) -> Option<f64> {
        self.entries.last().map(|e| e.reward)
    }

    /// Offers one sequence; returns whether it was stored.
    pub fn push(&mut self, reward: f64, tokens: &[Token]) -> bool {
        if !reward.is_finite() || self.entries.iter().any(|e| e.tokens == tokens) {
            return false;
        }
        if self.entries.len() == self.capacity && self.min_reward().is_some_and(|m| reward <= m) {
            return false;
        }
        let pos = self.entries.iter().position(|e| e.reward < reward).unwrap_or(self.entries.len());
        self.entries.insert(pos, QueueEntry { reward, tokens: tokens.to_vec() });
        self.entries.truncate(self.capacity);
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use Token::*;

    fn seq(i: usize) -> Vec<Token> {
        vec![Add, Var(0), Lit(i as f64)]
    }

    #[test]
    fn keeps_top_k() {
        let mut q = MaxRewardQueue::new(10);
        let rewards: Vec<f64> = (0..200).map(|i| ((i * 37) % 200) as f64 / 200.0).collect();
        for (i, r) in rewards.iter().enumerate() {
            q.push(*r, &seq(i));
        }
        let mut sorted = rewards.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        let got: Vec<f64> = q.entries().iter().map(|e| e.reward).collect();
        assert_eq!(got, sorted[..10]);
    }

    #[test]
    fn duplicates_are_ignored() {
        let mut q = MaxRewardQueue::new(3);
        assert!(q.push(0.5, &seq(1)));
        let before = q.clone();
        assert!(!q.push(0.9, &seq(1)));
        assert_eq!(q, before);
    }

    #[test]
    fn full_queue_rejects_ties_with_minimum() {
        let mut q = MaxRewardQueue::new(2);
        q.push(0.4, &seq(1));
        q.push(0.6, &seq(2));
        assert!(!q.push(0.4, &seq(3)));
        assert!(q.push(0.5, &seq(4)));
        assert_eq!(q.min_reward(), Some(0.5));
    }
}
