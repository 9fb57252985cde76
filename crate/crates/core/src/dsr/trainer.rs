use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::policy::{Policy, WeightedSequence, DEFAULT_HIDDEN};
use super::queue::MaxRewardQueue;
use super::reward::{reward, RewardData};
use crate::expr::{ConstraintSet, ExpressionTree, Token, Vocabulary, VocabularyConfig};
use crate::optim::Adam;
use crate::plmodels::Dataset;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Rspg,
    Vpg,
    Pqt,
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PolicyKind::Rspg => "rspg",
            PolicyKind::Vpg => "vpg",
            PolicyKind::Pqt => "pqt",
        })
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rspg" => Ok(PolicyKind::Rspg),
            "vpg" => Ok(PolicyKind::Vpg),
            "pqt" => Ok(PolicyKind::Pqt),
            _ => Err(Error::Config(format!("unknown policy '{s}' (expected rspg, vpg or pqt)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainerConfig {
    pub policy_kind: PolicyKind,
    pub epsilon: f64,
    pub ewma_alpha: f64,
    pub queue_k: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub entropy_weight: f64,
    pub sample_budget: usize,
    pub seed: u64,
    /// Early stop once the best reward reaches this value.
    pub threshold: f64,
    pub hidden: usize,
    pub vocabulary: VocabularyConfig,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            policy_kind: PolicyKind::Rspg,
            epsilon: 0.05,
            ewma_alpha: 0.25,
            queue_k: 10,
            batch_size: 200,
            learning_rate: 0.002,
            entropy_weight: 0.008,
            sample_budget: 10_000,
            seed: 0,
            threshold: 0.999,
            hidden: DEFAULT_HIDDEN,
            vocabulary: VocabularyConfig::default(),
        }
    }
}

impl TrainerConfig {
    /// Tuned (samples, batch, learning rate, entropy weight) per model and policy.
    pub fn preset(model: &str, kind: PolicyKind) -> Result<Self> {
        use PolicyKind::*;
        let (samples, batch, lr, ent) = match (model.to_ascii_lowercase().as_str(), kind) {
            ("abg", Rspg) => (50_000, 200, 0.002, 0.008),
            ("abg", Pqt) => (20_000, 200, 0.002, 0.005),
            ("abg", Vpg) => (30_000, 200, 0.0001, 0.005),
            ("ci", Rspg) => (2_000, 200, 0.001, 0.008),
            ("ci", Pqt) => (3_000, 200, 0.002, 0.005),
            ("ci", Vpg) => (1_000, 200, 0.0005, 0.008),
            ("indoor", Rspg) => (50_000, 300, 0.0005, 0.03),
            ("indoor", Pqt) => (50_000, 200, 0.001, 0.01),
            ("indoor", Vpg) => (50_000, 200, 0.001, 0.02),
            ("outdoor", Rspg) => (50_000, 200, 0.0005, 0.01),
            ("outdoor", Pqt) => (50_000, 200, 0.0005, 0.01),
            ("outdoor", Vpg) => (50_000, 200, 0.0001, 0.01),
            _ => return Err(Error::Config(format!("no DSR preset for model '{model}'"))),
        };
        Ok(TrainerConfig {
            policy_kind: kind,
            sample_budget: samples,
            batch_size: batch,
            learning_rate: lr,
            entropy_weight: ent,
            ..Default::default()
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return bad(format!("epsilon must lie in (0, 1), got {}", self.epsilon));
        }
        if !(self.ewma_alpha > 0.0 && self.ewma_alpha <= 1.0) {
            return bad(format!("ewma_alpha must lie in (0, 1], got {}", self.ewma_alpha));
        }
        if self.queue_k == 0 {
            return bad("queue_k must be >= 1".into());
        }
        if self.batch_size == 0 || self.sample_budget < self.batch_size {
            return bad(format!(
                "need 1 <= batch_size <= samples, got batch_size={} samples={}",
                self.batch_size, self.sample_budget
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(self.entropy_weight >= 0.0 && self.entropy_weight.is_finite()) {
            return bad(format!("entropy_weight must be non-negative, got {}", self.entropy_weight));
        }
        if self.hidden == 0 {
            return bad("hidden size must be >= 1".into());
        }
        Ok(())
    }
}

/// A batch of sampled sequences. `rewards` and `constants` are empty until scored.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SampledBatch {
    pub sequences: Vec<Vec<Token>>,
    pub log_probs: Vec<f64>,
    pub entropies: Vec<f64>,
    pub rewards: Vec<f64>,
    pub constants: Vec<Vec<f64>>,
}

impl SampledBatch {
    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    fn mean_entropy_terms(&self, entropy_weight: f64) -> impl Iterator<Item = WeightedSequence<'_>> {
        let e = entropy_weight / self.len() as f64;
        self.sequences.iter().map(move |t| WeightedSequence { tokens: t, w_lp: 0.0, w_ent: e })
    }
}

pub fn sample_batch(policy: &Policy, n: usize, cs: &ConstraintSet, rng: &mut ChaCha8Rng) -> Result<SampledBatch> {
    if n == 0 {
        return Err(Error::Config("batch size must be >= 1".into()));
    }
    let mut b = SampledBatch::default();
    for _ in 0..n {
        let t = policy.sample(cs, rng)?;
        b.sequences.push(t.tokens);
        b.log_probs.push(t.log_prob);
        b.entropies.push(t.entropy);
    }
    Ok(b)
}

/// Empirical quantile with linear interpolation between order statistics.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    assert!(!values.is_empty(), "quantile of an empty slice");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

/// Per-sequence log-probability weights for the risk-seeking objective:
/// `(R - q) / (epsilon * N)` strictly above the `(1 - epsilon)` quantile `q`,
/// exactly zero otherwise.
pub fn rspg_weights(rewards: &[f64], epsilon: f64) -> (f64, Vec<f64>) {
    let q = quantile(rewards, 1.0 - epsilon);
    let denom = epsilon * rewards.len() as f64;
    let w = rewards.iter().map(|r| if *r > q { (r - q) / denom } else { 0.0 }).collect();
    (q, w)
}

/// Exponentially weighted moving average baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ewma {
    pub alpha: f64,
    pub value: Option<f64>,
}

impl Ewma {
    pub fn new(alpha: f64) -> Self {
        Ewma { alpha, value: None }
    }

    /// Folds in a batch mean and returns the new baseline. The first call
    /// sets the baseline to the batch mean.
    pub fn update(&mut self, batch_mean: f64) -> f64 {
        let b = match self.value {
            None => batch_mean,
            Some(b) => self.alpha * batch_mean + (1.0 - self.alpha) * b,
        };
        self.value = Some(b);
        b
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepStats {
    /// Surrogate objective value before the update.
    pub objective: f64,
    /// Sequences with a non-zero log-probability weight.
    pub contributing: usize,
    /// RSPG quantile or VPG baseline.
    pub threshold: Option<f64>,
    /// True when no sequence lay strictly above the RSPG quantile, so only
    /// the entropy bonus moved the parameters.
    pub empty_quantile: bool,
}

fn ascend(policy: &mut Policy, opt: &mut Adam, terms: &[WeightedSequence<'_>], cs: &ConstraintSet) -> Result<f64> {
    let (value, grad) = policy.objective_gradient(terms, cs)?;
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::Training("policy gradient is not finite".into()));
    }
    let neg: Vec<f64> = grad.iter().map(|g| -g).collect();
    let mut p = policy.parameters();
    opt.step(&mut p, &neg);
    policy.set_parameters(&p);
    Ok(value)
}

fn require_rewards(batch: &SampledBatch) -> Result<()> {
    if batch.is_empty() || batch.rewards.len() != batch.len() {
        return Err(Error::Training("batch rewards are not set".into()));
    }
    Ok(())
}

pub fn rspg_step(
    policy: &mut Policy,
    opt: &mut Adam,
    batch: &SampledBatch,
    epsilon: f64,
    entropy_weight: f64,
    cs: &ConstraintSet,
) -> Result<StepStats> {
    require_rewards(batch)?;
    let (q, w) = rspg_weights(&batch.rewards, epsilon);
    let mut terms: Vec<WeightedSequence> = batch
        .sequences
        .iter()
        .zip(&w)
        .filter(|(_, w)| **w != 0.0)
        .map(|(t, w)| WeightedSequence { tokens: t, w_lp: *w, w_ent: 0.0 })
        .collect();
    let contributing = terms.len();
    terms.extend(batch.mean_entropy_terms(entropy_weight));
    let objective = ascend(policy, opt, &terms, cs)?;
    Ok(StepStats { objective, contributing, threshold: Some(q), empty_quantile: contributing == 0 })
}

pub fn vpg_step(
    policy: &mut Policy,
    opt: &mut Adam,
    batch: &SampledBatch,
    baseline: &mut Ewma,
    entropy_weight: f64,
    cs: &ConstraintSet,
) -> Result<StepStats> {
    require_rewards(batch)?;
    let n = batch.len() as f64;
    let b = baseline.update(batch.rewards.iter().sum::<f64>() / n);
    let mut terms: Vec<WeightedSequence> = batch
        .sequences
        .iter()
        .zip(&batch.rewards)
        .map(|(t, r)| WeightedSequence { tokens: t, w_lp: (r - b) / n, w_ent: 0.0 })
        .filter(|s| s.w_lp != 0.0)
        .collect();
    let contributing = terms.len();
    terms.extend(batch.mean_entropy_terms(entropy_weight));
    let objective = ascend(policy, opt, &terms, cs)?;
    Ok(StepStats { objective, contributing, threshold: Some(b), empty_quantile: false })
}

pub fn pqt_step(
    policy: &mut Policy,
    opt: &mut Adam,
    batch: &SampledBatch,
    queue: &mut MaxRewardQueue,
    entropy_weight: f64,
    cs: &ConstraintSet,
) -> Result<StepStats> {
    require_rewards(batch)?;
    for (t, r) in batch.sequences.iter().zip(&batch.rewards) {
        queue.push(*r, t);
    }
    let w = 1.0 / queue.capacity() as f64;
    let mut terms: Vec<WeightedSequence> =
        queue.entries().iter().map(|e| WeightedSequence { tokens: &e.tokens, w_lp: w, w_ent: 0.0 }).collect();
    let contributing = terms.len();
    terms.extend(batch.mean_entropy_terms(entropy_weight));
    let objective = ascend(policy, opt, &terms, cs)?;
    Ok(StepStats { objective, contributing, threshold: queue.min_reward(), empty_quantile: false })
}

/// One line per training step. The expression is rendered over raw inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub step: usize,
    pub best_reward: f64,
    pub mean_reward: f64,
    pub best_expression_infix: String,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    /// Best expression over the dataset's stored (possibly normalised) inputs.
    pub best: ExpressionTree,
    pub best_reward: f64,
    pub history: Vec<HistoryRow>,
    pub samples_used: usize,
    pub policy: Policy,
}

pub fn write_history_csv(history: &[HistoryRow], path: &std::path::Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    for row in history {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Scores every sequence, reusing cached rewards for repeated sequences.
/// Uncached sequences are scored in parallel; results are stored by index,
/// so the outcome does not depend on the worker count.
fn score(
    batch: &mut SampledBatch,
    data: &RewardData,
    cs: &ConstraintSet,
    cache: &mut HashMap<Vec<Token>, (f64, Vec<f64>)>,
) -> Result<()> {
    let mut fresh: Vec<&Vec<Token>> = Vec::new();
    for t in &batch.sequences {
        if !cache.contains_key(t) && !fresh.contains(&t) {
            fresh.push(t);
        }
    }
    let scored: Vec<Result<(f64, Vec<f64>)>> = fresh
        .par_iter()
        .map(|t| {
            let tree = ExpressionTree::new((*t).clone())?;
            let s = reward(&tree, data, cs);
            Ok((s.reward, s.constants))
        })
        .collect();
    for (t, s) in fresh.into_iter().zip(scored) {
        cache.insert(t.clone(), s?);
    }
    batch.rewards.clear();
    batch.constants.clear();
    for t in &batch.sequences {
        let (r, c) = &cache[t];
        batch.rewards.push(*r);
        batch.constants.push(c.clone());
    }
    Ok(())
}

/// Runs sample, fit, reward and update until the sample budget is spent or
/// the best reward reaches the threshold.
pub fn train(cfg: &TrainerConfig, data: &Dataset, cs: &ConstraintSet) -> Result<TrainResult> {
    cfg.validate()?;
    cs.validate()?;
    let vocab = Vocabulary::build(data.n_features(), &cfg.vocabulary)?;
    train_with_vocabulary(cfg, vocab, data, cs)
}

pub fn train_with_vocabulary(
    cfg: &TrainerConfig,
    vocab: Vocabulary,
    data: &Dataset,
    cs: &ConstraintSet,
) -> Result<TrainResult> {
    cfg.validate()?;
    cs.validate()?;
    let rd = RewardData::new(&data.rows, &data.target)?;
    let mut policy = Policy::new(vocab, cfg.hidden, cfg.seed)?;
    let mut opt = Adam::new(policy.n_params(), cfg.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5eed));
    let mut cache = HashMap::new();
    let mut ewma = Ewma::new(cfg.ewma_alpha);
    let mut queue = MaxRewardQueue::new(cfg.queue_k);

    let mut best: Option<(f64, Vec<Token>, Vec<f64>)> = None;
    let mut history = Vec::new();
    let mut samples_used = 0;
    let names = &data.feature_names;
    for step in 0..cfg.sample_budget / cfg.batch_size {
        let mut batch = sample_batch(&policy, cfg.batch_size, cs, &mut rng)?;
        samples_used += batch.len();
        score(&mut batch, &rd, cs, &mut cache)?;
        for i in 0..batch.len() {
            if best.as_ref().is_none_or(|b| batch.rewards[i] > b.0) {
                best = Some((batch.rewards[i], batch.sequences[i].clone(), batch.constants[i].clone()));
            }
        }
        let (best_r, best_t, best_c) = best.as_ref().expect("non-empty batch");
        let tree = ExpressionTree::with_constants(best_t.clone(), best_c.clone())?;
        let infix = match &data.norm {
            Some(m) => tree.with_scaled_inputs(m).to_infix_named(names),
            None => tree.to_infix_named(names),
        };
        history.push(HistoryRow {
            step,
            best_reward: *best_r,
            mean_reward: batch.rewards.iter().sum::<f64>() / batch.len() as f64,
            best_expression_infix: infix,
        });
        if *best_r >= cfg.threshold {
            break;
        }
        match cfg.policy_kind {
            PolicyKind::Rspg => rspg_step(&mut policy, &mut opt, &batch, cfg.epsilon, cfg.entropy_weight, cs)?,
            PolicyKind::Vpg => vpg_step(&mut policy, &mut opt, &batch, &mut ewma, cfg.entropy_weight, cs)?,
            PolicyKind::Pqt => pqt_step(&mut policy, &mut opt, &batch, &mut queue, cfg.entropy_weight, cs)?,
        };
    }
    let (best_reward, tokens, constants) = best.ok_or_else(|| Error::Training("no samples were drawn".into()))?;
    Ok(TrainResult {
        best: ExpressionTree::with_constants(tokens, constants)?,
        best_reward,
        history,
        samples_used,
        policy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Token::*;
    use crate::plmodels::Provenance;

    fn tiny_policy() -> (Policy, ConstraintSet) {
        let vocab = Vocabulary::new(vec![Add, Mul, Sin, Var(0), Var(1), Const]).unwrap();
        (Policy::new(vocab, 4, 3).unwrap(), ConstraintSet { min_len: 2, max_len: 9, ..Default::default() })
    }

    fn batch_with(policy: &Policy, cs: &ConstraintSet, rewards: Vec<f64>) -> SampledBatch {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut b = sample_batch(policy, rewards.len(), cs, &mut rng).unwrap();
        b.rewards = rewards;
        b
    }

    #[test]
    fn quantile_matches_linear_interpolation() {
        let r: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
        assert!((quantile(&r, 0.9) - 0.91).abs() < 1e-12);
        assert_eq!(quantile(&r, 0.0), 0.1);
        assert_eq!(quantile(&r, 1.0), 1.0);
        let (q, w) = rspg_weights(&r, 0.1);
        assert!((q - 0.91).abs() < 1e-12);
        assert_eq!(w.iter().filter(|v| **v != 0.0).count(), 1);
        assert!(w[9] > 0.0);
    }

    #[test]
    fn equal_rewards_leave_only_entropy() {
        let (mut p, cs) = tiny_policy();
        let b = batch_with(&p, &cs, vec![0.4; 20]);
        let mut opt = Adam::new(p.n_params(), 0.01);
        let before = p.parameters();
        let s = rspg_step(&mut p, &mut opt, &b, 0.05, 0.0, &cs).unwrap();
        assert!(s.empty_quantile);
        assert_eq!(s.contributing, 0);
        assert_eq!(p.parameters(), before);
        let s = rspg_step(&mut p, &mut opt, &b, 0.05, 0.1, &cs).unwrap();
        assert!(s.empty_quantile);
        assert_ne!(p.parameters(), before);
    }

    #[test]
    fn below_quantile_sequences_do_not_contribute() {
        let (p, cs) = tiny_policy();
        let rewards: Vec<f64> = (0..20).map(|i| i as f64 / 20.0).collect();
        let b = batch_with(&p, &cs, rewards.clone());
        let (_, w) = rspg_weights(&rewards, 0.1);
        let full: Vec<WeightedSequence> =
            b.sequences.iter().zip(&w).map(|(t, w)| WeightedSequence { tokens: t, w_lp: *w, w_ent: 0.0 }).collect();
        let kept: Vec<WeightedSequence> = full.iter().filter(|s| s.w_lp != 0.0).cloned().collect();
        assert!(kept.len() < full.len());
        assert_eq!(p.objective_gradient(&full, &cs).unwrap(), p.objective_gradient(&kept, &cs).unwrap());
    }

    #[test]
    fn ewma_updates() {
        let mut e = Ewma::new(0.25);
        assert_eq!(e.update(0.5), 0.5);
        assert!((e.update(0.9) - 0.6).abs() < 1e-15);
        let mut one = Ewma::new(1.0);
        one.update(0.2);
        assert_eq!(one.update(0.7), 0.7);
    }

    #[test]
    fn vpg_zero_advantage_is_entropy_only() {
        let (mut p, cs) = tiny_policy();
        let b = batch_with(&p, &cs, vec![0.25; 10]);
        let mut opt = Adam::new(p.n_params(), 0.01);
        let mut e = Ewma::new(0.25);
        let before = p.parameters();
        let s = vpg_step(&mut p, &mut opt, &b, &mut e, 0.0, &cs).unwrap();
        assert_eq!(s.contributing, 0);
        assert_eq!(p.parameters(), before);
    }

    #[test]
    fn pqt_absorbs_batch() {
        let (mut p, cs) = tiny_policy();
        let b = batch_with(&p, &cs, (0..30).map(|i| i as f64 / 30.0).collect());
        let mut q = MaxRewardQueue::new(5);
        let mut opt = Adam::new(p.n_params(), 0.01);
        pqt_step(&mut p, &mut opt, &b, &mut q, 0.005, &cs).unwrap();
        assert!(q.len() <= 5 && !q.is_empty());
        let max = b.rewards.iter().cloned().fold(0.0, f64::max);
        assert_eq!(q.entries()[0].reward, max);
    }

    #[test]
    fn config_validation() {
        assert!(TrainerConfig::default().validate().is_ok());
        for bad in [
            TrainerConfig { epsilon: 1.0, ..Default::default() },
            TrainerConfig { ewma_alpha: 0.0, ..Default::default() },
            TrainerConfig { queue_k: 0, ..Default::default() },
            TrainerConfig { sample_budget: 100, batch_size: 200, ..Default::default() },
        ] {
            assert!(bad.validate().is_err());
        }
        assert_eq!(TrainerConfig::preset("ci", PolicyKind::Pqt).unwrap().sample_budget, 3000);
        assert_eq!("VPG".parse::<PolicyKind>().unwrap(), PolicyKind::Vpg);
    }

    fn sum_dataset(n: usize) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        use rand::Rng;
        let rows: Vec<Vec<f64>> =
            (0..n).map(|_| vec![rng.random_range(0.1..1.0), rng.random_range(0.1..1.0)]).collect();
        let y = rows.iter().map(|r| r[0] + r[1]).collect();
        Dataset::new(vec!["x0".into(), "x1".into()], rows, y, Provenance::File { path: "sum".into() }).unwrap()
    }

    #[test]
    fn budget_sets_step_count_and_best_is_monotone() {
        let ds = sum_dataset(50);
        let cfg = TrainerConfig {
            sample_budget: 100,
            batch_size: 20,
            threshold: 2.0,
            hidden: 8,
            vocabulary: VocabularyConfig { max_literal: 0, ..Default::default() },
            ..Default::default()
        };
        let cs = ConstraintSet { min_len: 3, max_len: 12, ..Default::default() };
        let r = train(&cfg, &ds, &cs).unwrap();
        assert_eq!(r.history.len(), 5);
        assert_eq!(r.samples_used, 100);
        assert!(r.history.windows(2).all(|w| w[1].best_reward >= w[0].best_reward));
        assert!((0.0..=1.0).contains(&r.best_reward));
        let again = train(&cfg, &ds, &cs).unwrap();
        assert_eq!(r.history, again.history);
    }
}
