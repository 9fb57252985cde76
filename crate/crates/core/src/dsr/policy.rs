use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::expr::{ConstraintSet, PrefixState, Token, Vocabulary};
use crate::{Error, Result};

/// Default recurrent width.
pub const DEFAULT_HIDDEN: usize = 32;
/// Half-width of the uniform parameter initialisation.
pub const INIT_SCALE: f64 = 0.1;
/// Dead-end resamples allowed per requested sequence.
pub const MAX_RETRIES: usize = 100;

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Single-layer GRU over (parent, sibling) one-hot inputs with a linear
/// head producing one logit per vocabulary token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub vocab: Vocabulary,
    pub hidden: usize,
    wz: DMatrix<f64>,
    uz: DMatrix<f64>,
    bz: DVector<f64>,
    wr: DMatrix<f64>,
    ur: DMatrix<f64>,
    br: DVector<f64>,
    wn: DMatrix<f64>,
    un: DMatrix<f64>,
    bn: DVector<f64>,
    wo: DMatrix<f64>,
    bo: DVector<f64>,
}

/// Per-step quantities kept for back-propagation.
struct StepCache {
    parent: usize,
    sibling: usize,
    h_prev: DVector<f64>,
    z: DVector<f64>,
    r: DVector<f64>,
    n: DVector<f64>,
    /// Masked softmax probabilities (zero on masked entries).
    probs: Vec<f64>,
    mask: Vec<bool>,
    action: usize,
    entropy: f64,
}

/// One sampled or replayed sequence with its statistics under the policy.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub tokens: Vec<Token>,
    /// Sum of log-probabilities of the chosen tokens.
    pub log_prob: f64,
    /// Mean per-step entropy of the masked distributions.
    pub entropy: f64,
}

/// Objective weights for one sequence: `w_lp * log p + w_ent * mean entropy`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSequence<'a> {
    pub tokens: &'a [Token],
    pub w_lp: f64,
    pub w_ent: f64,
}

impl Policy {
    pub fn new(vocab: Vocabulary, hidden: usize, seed: u64) -> Result<Self> {
        if hidden == 0 {
            return Err(Error::Config("policy hidden size must be >= 1".into()));
        }
        let v = vocab.len();
        let d_in = 2 * (v + 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut mat = |r: usize, c: usize| DMatrix::from_fn(r, c, |_, _| rng.random_range(-INIT_SCALE..INIT_SCALE));
        let (wz, uz) = (mat(hidden, d_in), mat(hidden, hidden));
        let (wr, ur) = (mat(hidden, d_in), mat(hidden, hidden));
        let (wn, un) = (mat(hidden, d_in), mat(hidden, hidden));
        let wo = mat(v, hidden);
        let bz = mat(hidden, 1).column(0).into_owned();
        let br = mat(hidden, 1).column(0).into_owned();
        let bn = mat(hidden, 1).column(0).into_owned();
        let bo = mat(v, 1).column(0).into_owned();
        Ok(Policy { vocab, hidden, wz, uz, bz, wr, ur, br, wn, un, bn, wo, bo })
    }

    fn blocks(&self) -> [&[f64]; 11] {
        [
            self.wz.as_slice(),
            self.uz.as_slice(),
            self.bz.as_slice(),
            self.wr.as_slice(),
            self.ur.as_slice(),
            self.br.as_slice(),
            self.wn.as_slice(),
            self.un.as_slice(),
            self.bn.as_slice(),
            self.wo.as_slice(),
            self.bo.as_slice(),
        ]
    }

    pub fn n_params(&self) -> usize {
        self.blocks().iter().map(|b| b.len()).sum()
    }

    pub fn parameters(&self) -> Vec<f64> {
        self.blocks().concat()
    }

    pub fn set_parameters(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.n_params());
        let mut i = 0;
        for block in [
            self.wz.as_mut_slice(),
            self.uz.as_mut_slice(),
            self.bz.as_mut_slice(),
            self.wr.as_mut_slice(),
            self.ur.as_mut_slice(),
            self.br.as_mut_slice(),
            self.wn.as_mut_slice(),
            self.un.as_mut_slice(),
            self.bn.as_mut_slice(),
            self.wo.as_mut_slice(),
            self.bo.as_mut_slice(),
        ] {
            let n = block.len();
            block.copy_from_slice(&p[i..i + n]);
            i += n;
        }
    }

    fn input_indices(&self, state: &PrefixState) -> (usize, usize) {
        let empty = self.vocab.len();
        let (parent, sibling) = state.parent_and_sibling();
        let idx = |t: Option<Token>| t.and_then(|t| self.vocab.index_of(&t)).unwrap_or(empty);
        (idx(parent), empty + 1 + idx(sibling))
    }

    /// One GRU step; returns (z, r, n, h, logits).
    fn cell(&self, parent: usize, sibling: usize, h_prev: &DVector<f64>) -> [DVector<f64>; 5] {
        let pre = |w: &DMatrix<f64>, u: &DMatrix<f64>, b: &DVector<f64>, h: &DVector<f64>| {
            w.column(parent) + w.column(sibling) + u * h + b
        };
        let z = pre(&self.wz, &self.uz, &self.bz, h_prev).map(sigmoid);
        let r = pre(&self.wr, &self.ur, &self.br, h_prev).map(sigmoid);
        let rh = r.component_mul(h_prev);
        let n = pre(&self.wn, &self.un, &self.bn, &rh).map(f64::tanh);
        let h = (z.map(|v| 1.0 - v)).component_mul(&n) + z.component_mul(h_prev);
        let logits = &self.wo * &h + &self.bo;
        [z, r, n, h, logits]
    }

    fn masked_softmax(logits: &DVector<f64>, mask: &[bool]) -> (Vec<f64>, f64) {
        let max = logits.iter().zip(mask).filter(|(_, m)| **m).map(|(l, _)| *l).fold(f64::NEG_INFINITY, f64::max);
        let mut p: Vec<f64> = logits.iter().zip(mask).map(|(l, m)| if *m { (l - max).exp() } else { 0.0 }).collect();
        let s: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= s);
        let entropy = -p.iter().filter(|v| **v > 0.0).map(|v| v * v.ln()).sum::<f64>();
        (p, entropy)
    }

    /// Runs the policy forward, either sampling actions from `rng` or
    /// following `forced`. Dead ends are reported as [`Error::DeadEnd`].
    fn rollout(
        &self,
        cs: &ConstraintSet,
        mut rng: Option<&mut ChaCha8Rng>,
        forced: Option<&[Token]>,
    ) -> Result<(Vec<Token>, Vec<StepCache>)> {
        let mut state = PrefixState::new();
        let mut h = DVector::zeros(self.hidden);
        let mut steps = Vec::new();
        while !state.is_complete() {
            let mask = state.mask(&self.vocab, cs)?;
            let (parent, sibling) = self.input_indices(&state);
            let [z, r, n, h_new, logits] = self.cell(parent, sibling, &h);
            let (probs, entropy) = Self::masked_softmax(&logits, &mask);
            let action = match forced {
                Some(seq) => {
                    let t =
                        seq.get(state.len()).ok_or_else(|| Error::Expression("replayed sequence ends early".into()))?;
                    let a = self
                        .vocab
                        .index_of(t)
                        .ok_or_else(|| Error::Expression(format!("token {t:?} not in vocabulary")))?;
                    if !mask[a] {
                        return Err(Error::Expression(format!("token {t:?} is masked at position {}", state.len())));
                    }
                    a
                }
                None => {
                    let u: f64 = rng.as_mut().expect("sampling needs an rng").random();
                    let mut acc = 0.0;
                    let mut pick = None;
                    for (i, p) in probs.iter().enumerate() {
                        if *p > 0.0 {
                            acc += p;
                            pick = Some(i);
                            if u < acc {
                                break;
                            }
                        }
                    }
                    pick.expect("mask has an allowed entry")
                }
            };
            state.push(self.vocab.get(action))?;
            steps.push(StepCache { parent, sibling, h_prev: h, z, r, n, probs, mask, action, entropy });
            h = h_new;
        }
        if let Some(seq) = forced {
            if seq.len() != state.len() {
                return Err(Error::Expression("replayed sequence has trailing tokens".into()));
            }
        }
        Ok((state.tokens().to_vec(), steps))
    }

    fn summarize(tokens: Vec<Token>, steps: &[StepCache]) -> Trajectory {
        let log_prob = steps.iter().map(|s| s.probs[s.action].ln()).sum();
        let entropy = steps.iter().map(|s| s.entropy).sum::<f64>() / steps.len() as f64;
        Trajectory { tokens, log_prob, entropy }
    }

    /// Samples one complete sequence, resampling after dead ends.
    pub fn sample(&self, cs: &ConstraintSet, rng: &mut ChaCha8Rng) -> Result<Trajectory> {
        for _ in 0..MAX_RETRIES {
            match self.rollout(cs, Some(rng), None) {
                Ok((tokens, steps)) => return Ok(Self::summarize(tokens, &steps)),
                Err(Error::DeadEnd(_)) => continue,
                Err(e) => return Err(e),
            }
        }
        Err(Error::Training(format!("sampling hit {MAX_RETRIES} consecutive dead ends")))
    }

    /// Log-probability and mean entropy of a given sequence under the policy.
    pub fn replay(&self, tokens: &[Token], cs: &ConstraintSet) -> Result<Trajectory> {
        let (tokens, steps) = self.rollout(cs, None, Some(tokens))?;
        Ok(Self::summarize(tokens, &steps))
    }

    /// Value and gradient of `sum_i (w_lp_i * log p(tau_i) + w_ent_i * H(tau_i))`
    /// with respect to the flat parameter vector, by back-propagation through time.
    pub fn objective_gradient(&self, seqs: &[WeightedSequence<'_>], cs: &ConstraintSet) -> Result<(f64, Vec<f64>)> {
        let mut value = 0.0;
        let mut g = self.zeros_like();
        for s in seqs {
            if s.w_lp == 0.0 && s.w_ent == 0.0 {
                continue;
            }
            let (tokens, steps) = self.rollout(cs, None, Some(s.tokens))?;
            let traj = Self::summarize(tokens, &steps);
            value += s.w_lp * traj.log_prob + s.w_ent * traj.entropy;
            self.backprop(&steps, s.w_lp, s.w_ent / steps.len() as f64, &mut g);
        }
        Ok((value, g.parameters()))
    }

    fn zeros_like(&self) -> Policy {
        let mut z = self.clone();
        z.set_parameters(&vec![0.0; self.n_params()]);
        z
    }

    fn backprop(&self, steps: &[StepCache], w_lp: f64, w_ent_step: f64, g: &mut Policy) {
        let mut dh_next = DVector::zeros(self.hidden);
        for s in steps.iter().rev() {
            // d objective / d logits on the allowed entries
            let dlogits = DVector::from_fn(self.vocab.len(), |j, _| {
                if !s.mask[j] {
                    return 0.0;
                }
                let p = s.probs[j];
                let onehot = if j == s.action { 1.0 } else { 0.0 };
                let ent = if p > 0.0 { -p * (p.ln() + s.entropy) } else { 0.0 };
                w_lp * (onehot - p) + w_ent_step * ent
            });
            let h = (s.z.map(|v| 1.0 - v)).component_mul(&s.n) + s.z.component_mul(&s.h_prev);
            g.wo += &dlogits * h.transpose();
            g.bo += &dlogits;
            let dh = self.wo.transpose() * &dlogits + &dh_next;

            let dz = dh.component_mul(&(&s.h_prev - &s.n));
            let dn = dh.component_mul(&s.z.map(|v| 1.0 - v));
            let mut dh_prev = dh.component_mul(&s.z);

            let da_n = dn.component_mul(&s.n.map(|v| 1.0 - v * v));
            let rh = s.r.component_mul(&s.h_prev);
            g.un += &da_n * rh.transpose();
            let drh = self.un.transpose() * &da_n;
            let dr = drh.component_mul(&s.h_prev);
            dh_prev += drh.component_mul(&s.r);

            let da_z = dz.component_mul(&s.z.map(|v| v * (1.0 - v)));
            let da_r = dr.component_mul(&s.r.map(|v| v * (1.0 - v)));
            g.uz += &da_z * s.h_prev.transpose();
            g.ur += &da_r * s.h_prev.transpose();
            dh_prev += self.uz.transpose() * &da_z + self.ur.transpose() * &da_r;

            for (w, da) in [(&mut g.wz, &da_z), (&mut g.wr, &da_r), (&mut g.wn, &da_n)] {
                let mut c = w.column_mut(s.parent);
                c += da;
                let mut c = w.column_mut(s.sibling);
                c += da;
            }
            g.bz += &da_z;
            g.br += &da_r;
            g.bn += &da_n;
            dh_next = dh_prev;
        }
    }
}
