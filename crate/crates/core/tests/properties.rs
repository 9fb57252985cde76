mod common;

use autopl::dsr::{reward, MaxRewardQueue, Policy, RewardData};
use autopl::evalharness::{self, monte_carlo_eval, MonteCarloConfig, ScoreOn};
use autopl::expr::{is_complete, ConstraintSet, ExpressionTree, RepeatBound, Token, Vocabulary, VocabularyConfig};
use autopl::kan::{self, BSplineBasis, KanInit, KanNetwork};
use autopl::plmodels::{self, generate_synthetic, split, Dataset, ModelKind, Provenance, SyntheticSpec};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] > w[0])
}

fn grid(lo: f64, hi: f64) -> Vec<f64> {
    (0..100).map(|i| lo + (hi - lo) * i as f64 / 99.0).collect()
}

fn leaf() -> impl Strategy<Value = Vec<Token>> {
    prop_oneof![
        Just(vec![Token::Var(0)]),
        Just(vec![Token::Var(1)]),
        (1u32..=10).prop_map(|v| vec![Token::Lit(v as f64)]),
        Just(vec![Token::Lit(0.5)]),
    ]
}

/// Random complete pre-order token sequences.
fn tree() -> impl Strategy<Value = Vec<Token>> {
    leaf().prop_recursive(4, 24, 2, |inner| {
        let unary = prop_oneof![
            Just(Token::Log10),
            Just(Token::Exp),
            Just(Token::Sin),
            Just(Token::Cos),
            Just(Token::Sqrt),
            Just(Token::Square),
            Just(Token::Cube)
        ];
        let binary = prop_oneof![Just(Token::Add), Just(Token::Sub), Just(Token::Mul), Just(Token::Div)];
        prop_oneof![
            (unary, inner.clone()).prop_map(|(u, a)| [vec![u], a].concat()),
            (binary, inner.clone(), inner).prop_map(|(b, x, y)| [vec![b], x, y].concat()),
        ]
    })
}

/// Evaluates the rendered infix text: `(a op b)`, `name(a)`, `(a)^k`,
/// numbers and `x<i>`.
struct Infix<'a> {
    s: &'a [u8],
    i: usize,
    row: &'a [f64],
}

impl Infix<'_> {
    fn expr(&mut self) -> f64 {
        let v = if self.s[self.i] == b'(' {
            self.i += 1;
            let a = self.expr();
            if self.s[self.i] == b')' {
                self.i += 1;
                a
            } else {
                let op = self.s[self.i + 1];
                self.i += 3;
                let b = self.expr();
                self.i += 1;
                match op {
                    b'+' => a + b,
                    b'-' => a - b,
                    b'*' => a * b,
                    _ => a / b,
                }
            }
        } else if self.s[self.i] == b'x' {
            let start = self.i + 1;
            self.i = start;
            while self.i < self.s.len() && self.s[self.i].is_ascii_digit() {
                self.i += 1;
            }
            self.row[std::str::from_utf8(&self.s[start..self.i]).unwrap().parse::<usize>().unwrap()]
        } else if self.s[self.i].is_ascii_alphabetic() {
            let start = self.i;
            while self.s[self.i] != b'(' {
                self.i += 1;
            }
            let name = std::str::from_utf8(&self.s[start..self.i]).unwrap().to_string();
            self.i += 1;
            let a = self.expr();
            self.i += 1;
            Token::parse(&name).unwrap().apply_unary(a)
        } else {
            let start = self.i;
            self.i += 1;
            while self.i < self.s.len() && (self.s[self.i].is_ascii_digit() || b".eE".contains(&self.s[self.i])) {
                self.i += 1;
            }
            std::str::from_utf8(&self.s[start..self.i]).unwrap().parse().unwrap()
        };
        if self.s.get(self.i) == Some(&b'^') {
            let k = (self.s[self.i + 1] - b'0') as i32;
            self.i += 2;
            return v.powi(k);
        }
        v
    }
}

fn same(a: f64, b: f64) -> bool {
    (a.is_nan() && b.is_nan()) || a == b || (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn models_increase_in_distance_and_frequency(
        alpha in 0.1..2.5f64, beta in -10.0..-1.0f64, gamma in 0.01..2.0f64,
        f in 2.0..73.5f64, d in 1.5..500.0f64, n in 2.0..6.0f64,
    ) {
        let ds = grid(1.0, 500.0);
        let fs = grid(2.0, 73.5);
        let abg_d: Vec<f64> = ds.iter().map(|&d| plmodels::eval_abg(&plmodels::AbgParams { alpha, beta, gamma, f_ghz: f, d_m: d, chi: 0.0 }).unwrap()).collect();
        let abg_f: Vec<f64> = fs.iter().map(|&f| plmodels::eval_abg(&plmodels::AbgParams { alpha, beta, gamma, f_ghz: f, d_m: d, chi: 0.0 }).unwrap()).collect();
        let ci_d: Vec<f64> = ds.iter().map(|&d| plmodels::eval_ci(&plmodels::CiParams { f_hz: f * 1e9, n, d_m: d, chi: 0.0 }).unwrap()).collect();
        let ci_f: Vec<f64> = fs.iter().map(|&f| plmodels::eval_ci(&plmodels::CiParams { f_hz: f * 1e9, n, d_m: d, chi: 0.0 }).unwrap()).collect();
        let fs_d: Vec<f64> = ds.iter().map(|&d| plmodels::eval_fs(f * 1000.0, d / 1000.0).unwrap()).collect();
        let eo_d: Vec<f64> = ds.iter().map(|&d| plmodels::eval_outdoor_empirical(&plmodels::OutdoorParams { d_m: d, h_ed_m: 1.0, x_sigma: 0.0 }).unwrap()).collect();
        let ei_d: Vec<f64> = ds.iter().map(|&d| plmodels::eval_indoor_empirical(&plmodels::IndoorParams { d_m: d, n_walls: 1.0, n_floors: 2.0 }).unwrap()).collect();
        for v in [abg_d, abg_f, ci_d, ci_f, fs_d, eo_d, ei_d] {
            prop_assert!(increasing(&v));
        }
    }

    #[test]
    fn free_space_doubling_adds_six_db(f in 1.0..1e5f64, d in 1e-3..1e3f64) {
        let step = plmodels::eval_fs(f, 2.0 * d).unwrap() - plmodels::eval_fs(f, d).unwrap();
        prop_assert!((step - 20.0 * 2f64.log10()).abs() <= 1e-12);
    }

    #[test]
    fn generated_rows_reproduce_targets(seed in any::<u64>(), abg in any::<bool>()) {
        let model = if abg { ModelKind::Abg } else { ModelKind::Ci };
        let spec = SyntheticSpec::new(model, 50, seed);
        let ds = generate_synthetic(&spec).unwrap();
        let r = &spec.ranges;
        for (row, t) in ds.rows.iter().zip(&ds.target) {
            let again = if abg {
                prop_assert!(r.alpha.contains(row[0]) && r.beta.contains(row[1]) && r.gamma.contains(row[2]));
                prop_assert!(r.f_ghz.contains(row[3]) && r.d_m.contains(row[4]));
                plmodels::eval_abg(&plmodels::AbgParams { alpha: row[0], beta: row[1], gamma: row[2], f_ghz: row[3], d_m: row[4], chi: row[5] }).unwrap()
            } else {
                prop_assert!(r.f_ghz.contains(row[0] / 1e9) && r.n.contains(row[1]) && r.d_m.contains(row[2]));
                plmodels::eval_ci(&plmodels::CiParams { f_hz: row[0], n: row[1], d_m: row[2], chi: row[3] }).unwrap()
            };
            prop_assert_eq!(again.to_bits(), t.to_bits());
        }
    }

    #[test]
    fn split_is_a_deterministic_partition(seed in any::<u64>(), n in 2usize..200, frac in 0.05..0.95f64) {
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64]).collect();
        let ds = Dataset::new(vec!["i".into()], rows, (0..n).map(|i| i as f64).collect(), Provenance::File { path: "mem".into() }).unwrap();
        let (a, b) = split(&ds, frac, seed).unwrap();
        let (a2, b2) = split(&ds, frac, seed).unwrap();
        prop_assert_eq!(&a.target, &a2.target);
        prop_assert_eq!(&b.target, &b2.target);
        let mut all: Vec<f64> = a.target.iter().chain(&b.target).copied().collect();
        all.sort_by(f64::total_cmp);
        prop_assert_eq!(all, ds.target);
    }

    #[test]
    fn infix_rendering_preserves_semantics(toks in tree(), x0 in -3.0..3.0f64, x1 in 0.1..5.0f64) {
        let t = ExpressionTree::new(toks).unwrap();
        let row = [x0, x1];
        let direct = t.evaluate(&[row.to_vec()]).unwrap()[0];
        let text = t.to_infix();
        let mut p = Infix { s: text.as_bytes(), i: 0, row: &row };
        let parsed = p.expr();
        prop_assert_eq!(p.i, text.len());
        // the tree maps non-finite values to NaN
        let parsed = if parsed.is_finite() { parsed } else { f64::NAN };
        prop_assert!(same(direct, parsed), "{} -> {} vs {}", text, direct, parsed);
    }

    #[test]
    fn evaluation_matches_closed_form(a in 0.1..10.0f64, b in -5.0..5.0f64, d in 1.0..500.0f64, f in 1.0..80.0f64) {
        // add mul const log10 x0 add mul const log10 x1 const
        let toks = vec![Token::Add, Token::Mul, Token::Const, Token::Log10, Token::Var(0), Token::Add, Token::Mul, Token::Const, Token::Log10, Token::Var(1), Token::Const];
        let t = ExpressionTree::with_constants(toks, vec![10.0 * a, 20.0, b]).unwrap();
        let got = t.evaluate(&[vec![d, f]]).unwrap()[0];
        let want = 10.0 * a * d.log10() + 20.0 * f.log10() + b;
        prop_assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0));
    }

    #[test]
    fn replayed_log_probability_matches_sampling(seed in any::<u64>()) {
        let vocab = Vocabulary::build(2, &VocabularyConfig::default()).unwrap();
        let p = Policy::new(vocab, 8, seed).unwrap();
        let cs = ConstraintSet::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        for _ in 0..5 {
            let s = p.sample(&cs, &mut rng).unwrap();
            prop_assert!(s.log_prob <= 0.0);
            let r = p.replay(&s.tokens, &cs).unwrap();
            prop_assert!((r.log_prob - s.log_prob).abs() <= 1e-10);
        }
    }

    #[test]
    fn reward_stays_in_unit_interval(toks in tree(), scale in 0.1..100.0f64, need_x1 in any::<bool>()) {
        let rows: Vec<Vec<f64>> = (0..30).map(|i| vec![0.1 * i as f64 - 1.0, 0.2 + 0.15 * i as f64]).collect();
        let y: Vec<f64> = rows.iter().map(|r| scale * (r[0] + r[1].ln())).collect();
        let data = RewardData::new(&rows, &y).unwrap();
        let repeat = if need_x1 { vec![RepeatBound { token: Token::Var(1), min: 1, max: None }] } else { Vec::new() };
        let cs = ConstraintSet { min_len: 1, repeat, ..Default::default() };
        let t = ExpressionTree::new(toks).unwrap();
        let r = reward(&t, &data, &cs).reward;
        prop_assert!((0.0..=1.0).contains(&r));
    }

    #[test]
    fn queue_keeps_the_best_distinct_entries(rewards in prop::collection::vec(0u8..50, 1..80), k in 1usize..12) {
        let mut q = MaxRewardQueue::new(k);
        for (i, r) in rewards.iter().enumerate() {
            // token identity follows the reward so equal rewards are duplicates
            q.push(*r as f64 / 50.0, &[Token::Lit(*r as f64)]);
            prop_assert!(q.len() <= k.min(i + 1));
        }
        let got: Vec<f64> = q.entries().iter().map(|e| e.reward).collect();
        prop_assert!(got.windows(2).all(|w| w[0] > w[1]));
        let mut distinct: Vec<u8> = rewards.clone();
        distinct.sort_unstable_by(|a, b| b.cmp(a));
        distinct.dedup();
        let want: Vec<f64> = distinct.iter().take(k).map(|r| *r as f64 / 50.0).collect();
        prop_assert_eq!(got, want);
    }

    #[test]
    fn bspline_partition_of_unity(x in -1.0..1.05f64, gi in 0usize..5, k in 1usize..4) {
        let g = [3, 5, 8, 10, 50][gi];
        let b = BSplineBasis::new(g, k, -1.0, 1.05).unwrap();
        let v = b.eval(x);
        prop_assert_eq!(v.len(), b.n_basis());
        prop_assert!((v.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        prop_assert!(v.iter().all(|u| *u >= 0.0));
    }

    #[test]
    fn forward_is_linear_in_spline_coefficients(seed in any::<u64>(), x0 in -1.0..1.0f64, x1 in -1.0..1.0f64) {
        let init = KanInit { grid: 5, order: 3, seed, ..Default::default() };
        let mut u = KanNetwork::new(&[2, 1], &init).unwrap();
        let mut v = KanNetwork::new(&[2, 1], &KanInit { seed: seed ^ 7, ..init }).unwrap();
        for net in [&mut u, &mut v] {
            for e in net.layers[0].edges.iter_mut() {
                e.w_base = 0.0;
                e.w_spline = 1.0;
            }
        }
        let mut sum = u.clone();
        for (e, (a, b)) in sum.layers[0].edges.iter_mut().zip(u.layers[0].edges.iter().zip(&v.layers[0].edges)) {
            e.coeffs = a.coeffs.iter().zip(&b.coeffs).map(|(p, q)| p + q).collect();
        }
        let raw = |n: &KanNetwork| n.forward_raw_sum(&[x0, x1]);
        prop_assert!((raw(&sum) - raw(&u) - raw(&v)).abs() <= 1e-10);
    }

    #[test]
    fn metrics_match_naive_loops(pairs in prop::collection::vec((1.0..200.0f64, -20.0..20.0f64), 2..100)) {
        let y: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let p: Vec<f64> = pairs.iter().map(|p| p.0 + p.1).collect();
        let m = evalharness::Metrics::compute(&p, &y);
        let tol = |a: f64, b: f64| (a - b).abs() <= 1e-12 * b.abs().max(1.0);
        prop_assert!(tol(evalharness::mae(&p, &y).unwrap(), common::mae(&p, &y)));
        prop_assert!(tol(evalharness::mse(&p, &y).unwrap(), common::mse(&p, &y)));
        prop_assert!(tol(evalharness::mape(&p, &y).unwrap(), common::mape(&p, &y)));
        if let Ok(m) = m {
            prop_assert!(tol(m.r2, common::r2(&p, &y)));
        }
    }

    #[test]
    fn shift_invariance_of_r2_and_mae(pairs in prop::collection::vec((50.0..150.0f64, -10.0..10.0f64), 3..60), c in 1.0..100.0f64) {
        let y: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let p: Vec<f64> = pairs.iter().map(|p| p.0 + p.1).collect();
        prop_assume!(p.iter().zip(&y).any(|(a, b)| a != b));
        let ys: Vec<f64> = y.iter().map(|v| v + c).collect();
        let ps: Vec<f64> = p.iter().map(|v| v + c).collect();
        let r2 = evalharness::r2(&p, &y).unwrap();
        prop_assert!((evalharness::r2(&ps, &ys).unwrap() - r2).abs() <= 1e-9 * r2.abs().max(1.0));
        prop_assert!((evalharness::mae(&ps, &ys).unwrap() - evalharness::mae(&p, &y).unwrap()).abs() <= 1e-9);
        prop_assert!(evalharness::mape(&ps, &ys).unwrap() < evalharness::mape(&p, &y).unwrap());
    }
}

#[test]
fn completeness_agrees_with_recursive_builder() {
    let alphabet = [Token::Add, Token::Mul, Token::Sin, Token::Var(0), Token::Var(1), Token::Const];
    let mut checked = 0;
    for len in 0..=7u32 {
        for code in 0..6usize.pow(len) {
            let mut c = code;
            let seq: Vec<Token> = (0..len)
                .map(|_| {
                    let t = alphabet[c % 6];
                    c /= 6;
                    t
                })
                .collect();
            assert_eq!(is_complete(&seq), common::complete(&seq), "{seq:?}");
            checked += 1;
        }
    }
    assert_eq!(checked, (0..=7).map(|l| 6usize.pow(l)).sum::<usize>());
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let ds = autopl::plmodels::normalize_max(&generate_synthetic(&SyntheticSpec::new(ModelKind::Ci, 120, 3)).unwrap())
        .unwrap();
    let cfg = kan::KanTrainConfig { steps: 20, ..kan::KanTrainConfig::ci() };
    let (net, _) = kan::fit_network(&ds, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("k.json");
    kan::save(&net, &path).unwrap();
    let back = kan::load(&path).unwrap();
    let a = net.forward(&ds.rows).unwrap();
    let b = back.forward(&ds.rows).unwrap();
    assert!(a.iter().zip(&b).all(|(u, v)| u.to_bits() == v.to_bits()));
    assert_eq!(back, net);
}

#[test]
fn deterministic_predictor_has_zero_spread() {
    let ds = generate_synthetic(&SyntheticSpec::new(ModelKind::Ci, 100, 1)).unwrap();
    let cfg = MonteCarloConfig { runs: 10, score_on: ScoreOn::Full, ..Default::default() };
    let rep = monte_carlo_eval(&ds, &cfg, |_, scored, _| {
        Ok(scored.rows.iter().map(|r| 30.0 * r[2].log10() + 60.0).collect())
    })
    .unwrap();
    assert_eq!(rep.mae.std, 0.0);
    assert_eq!(rep.r2.std, 0.0);
}
