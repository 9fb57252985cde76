use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ConfigFile;
use super::manifest::RunManifest;
use super::{BaselineArgs, Cli, Command, EvalArgs, GenDataArgs, ReportArgs, TrainDsrArgs, TrainKanArgs};
use crate::dsr::{self, PolicyKind, TrainerConfig};
use crate::evalharness::{
    baseline_table, check_validity, monte_carlo_eval, read_metrics_csv, render_summary, write_metrics_csv,
    write_scatter_csv, MethodRow, Metrics, MetricsReport, MonteCarloConfig, ProbeRanges, Site, ValidityReport,
    VariableRoles,
};
use crate::expr::{optimize_constants, Columns, ConstraintSet, ExpressionRecord, ExpressionTree, Token};
use crate::kan::{
    self, auto_symbolic, extract_expression, fit_network, retrain_affine, write_graph_csv, KanNetwork, KanTrainConfig,
    DEFAULT_LIBRARY,
};
use crate::plmodels::{
    generate_synthetic, load_empirical_csv, norm_sidecar_path, normalize_max, split, Dataset, ModelKind, NormSidecar,
    Schema, SyntheticSpec,
};
use crate::{Error, Result};

pub const DATASET_FILE: &str = "dataset.csv";
pub const METRICS_FILE: &str = "metrics.csv";
pub const EXPRESSIONS_FILE: &str = "expressions.txt";
pub const EXPRESSIONS_JSON: &str = "expressions.json";
pub const HISTORY_FILE: &str = "history.csv";
pub const GRAPH_FILE: &str = "graph.csv";
pub const SCATTER_FILE: &str = "scatter.csv";
pub const VALIDITY_FILE: &str = "validity.json";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const KAN_FILE: &str = "kan.json";
pub const KAN_SYMBOLIC_FILE: &str = "kan_symbolic.json";

/// Affine refinement iterations after symbolic snapping.
const RETRAIN_ITERATIONS: usize = 100;

/// Independent stream `stream` derived from the command seed (splitmix64).
pub fn sub_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A discovered expression as stored in `expressions.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedExpression {
    pub method: String,
    pub expression: ExpressionRecord,
    pub validity: Option<ValidityReport>,
}

pub(super) fn dispatch(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be >= 1".into()));
        }
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let cfg = ConfigFile::load(cli.config.as_deref())?;
    let mut m = RunManifest::start(command_name(&cli.command), cli.threads);
    if let Some(p) = &cli.config {
        m.input(p)?;
    }
    let out_dir = match &cli.command {
        Command::GenData(a) => &a.out_dir,
        Command::TrainKan(a) => &a.out_dir,
        Command::TrainDsr(a) => &a.out_dir,
        Command::Eval(a) => &a.out_dir,
        Command::Baseline(a) => &a.out_dir,
        Command::Report(a) => &a.out_dir,
    };
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    match &cli.command {
        Command::GenData(a) => gen_data(a, &cfg, &mut m)?,
        Command::TrainKan(a) => train_kan(a, &cfg, &mut m)?,
        Command::TrainDsr(a) => train_dsr(a, &cfg, &mut m)?,
        Command::Eval(a) => eval(a, &cfg, &mut m)?,
        Command::Baseline(a) => baseline(a, &mut m)?,
        Command::Report(a) => report(a, &mut m)?,
    }
    m.finish(out_dir)?;
    Ok(())
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::GenData(_) => "gen-data",
        Command::TrainKan(_) => "train-kan",
        Command::TrainDsr(_) => "train-dsr",
        Command::Eval(_) => "eval",
        Command::Baseline(_) => "baseline",
        Command::Report(_) => "report",
    }
}

fn gen_data(a: &GenDataArgs, cfg: &ConfigFile, m: &mut RunManifest) -> Result<()> {
    let normalize = a.normalize || cfg.get("normalize")?.unwrap_or(false);
    m.set("normalize", normalize);
    let ds = match cfg.pick_opt(a.input.clone(), "input")? {
        Some(input) => {
            let schema: String = cfg
                .pick_opt(a.schema.clone(), "schema")?
                .ok_or_else(|| Error::Config("--input needs --schema".into()))?;
            m.input(&input)?;
            m.set("schema", &schema);
            let (ds, rep) = load_empirical_csv(&input, &Schema::parse(&schema)?)?;
            if rep.dropped > 0 {
                eprintln!("dropped {} of {} rows with missing or non-finite values", rep.dropped, rep.read);
            }
            ds
        }
        None => {
            let model: ModelKind = cfg.pick(a.model.clone(), "model", "abg".to_string())?.parse()?;
            let count = cfg.pick(a.count, "count", 1000)?;
            let seed = cfg.pick(a.seed, "seed", 0)?;
            m.set("model", model);
            m.set("count", count);
            m.seeds.insert("data".into(), seed);
            generate_synthetic(&SyntheticSpec::new(model, count, seed))?
        }
    };
    let ds = if normalize { normalize_max(&ds)? } else { ds };
    let path = a.out_dir.join(DATASET_FILE);
    ds.write_csv(&path)?;
    m.output(&path);
    if let Some(maxima) = &ds.norm {
        let side = norm_sidecar_path(&path);
        NormSidecar { feature_names: ds.feature_names.clone(), maxima: maxima.clone() }.write(&side)?;
        m.output(&side);
    }
    println!("wrote {} rows x {} features to {}", ds.n_rows(), ds.n_features(), path.display());
    Ok(())
}

/// Reads a dataset and max-normalises it unless a sidecar already did.
fn load_normalized(path: &Path, m: &mut RunManifest) -> Result<Dataset> {
    let ds = Dataset::read_csv(path)?;
    m.input(path)?;
    let side = norm_sidecar_path(path);
    if side.exists() {
        m.input(&side)?;
    }
    match ds.norm {
        Some(_) => Ok(ds),
        None => normalize_max(&ds),
    }
}

fn parse_shape(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|_| Error::Config(format!("bad layer width '{p}' in shape '{s}'"))))
        .collect()
}

fn shape_label(shape: &[usize]) -> String {
    let parts: Vec<String> = shape.iter().map(usize::to_string).collect();
    format!("[{}]", parts.join(","))
}

fn test_metrics(pred: &[f64], test: &Dataset) -> Result<MetricsReport> {
    let m = Metrics::compute(pred, &test.target)?;
    Ok(MetricsReport::single(m, test.target.iter().copied().zip(pred.iter().copied()).collect()))
}

fn validity_of(e: &ExpressionTree, ds: &Dataset) -> Result<ValidityReport> {
    check_validity(e, &VariableRoles::from_names(&ds.feature_names), &ProbeRanges::from_dataset(ds))
}

fn write_results(out: &Path, rows: &[MethodRow], saved: &[SavedExpression], m: &mut RunManifest) -> Result<()> {
    let metrics = out.join(METRICS_FILE);
    write_metrics_csv(&metrics, rows)?;
    m.output(&metrics);
    let scatter = out.join(SCATTER_FILE);
    write_scatter_csv(&scatter, rows)?;
    m.output(&scatter);
    if !saved.is_empty() {
        let mut text = String::new();
        for s in saved {
            let _ = writeln!(text, "{}: {}", s.method, s.expression.infix);
            let toks: Vec<String> = s.expression.tokens.iter().map(Token::name).collect();
            let _ = writeln!(text, "  tokens: {}", toks.join(" "));
            if !s.expression.constants.is_empty() {
                let c: Vec<String> = s.expression.constants.iter().map(f64::to_string).collect();
                let _ = writeln!(text, "  constants: {}", c.join(", "));
            }
            if let Some(v) = &s.validity {
                let _ = writeln!(text, "  validity: {}", v.verdict);
                for d in &v.diagnostics {
                    let _ = writeln!(text, "    {d}");
                }
            }
        }
        let p = out.join(EXPRESSIONS_FILE);
        fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
        m.output(&p);
        let p = out.join(EXPRESSIONS_JSON);
        fs::write(&p, serde_json::to_string_pretty(saved)? + "\n").map_err(|e| Error::io(&p, e))?;
        m.output(&p);
    }
    Ok(())
}

fn train_kan(a: &TrainKanArgs, cfg: &ConfigFile, m: &mut RunManifest) -> Result<()> {
    let ds = load_normalized(&a.data, m)?;
    let preset: Option<String> = cfg.pick_opt(a.preset.clone(), "preset")?;
    let mut k = match &preset {
        Some(p) => KanTrainConfig::preset(p)?,
        None => KanTrainConfig::default(),
    };
    match cfg.pick_opt(a.shape.clone(), "shape")? {
        Some(s) => k.shape = parse_shape(&s)?,
        None if preset.is_none() => k.shape[0] = ds.n_features(),
        None => {}
    }
    k.grid = cfg.pick(a.grid, "grid", k.grid)?;
    k.order = cfg.pick(a.order, "order", k.order)?;
    k.steps = cfg.pick(a.steps, "steps", k.steps)?;
    k.lambda = cfg.pick(a.lambda, "lambda", k.lambda)?;
    k.learning_rate = cfg.pick(a.lr, "learning_rate", k.learning_rate)?;
    let seed = cfg.pick(a.seed, "seed", 0)?;
    let frac = cfg.pick(a.split, "split", 0.8)?;
    let prune: Option<f64> = cfg.pick_opt(a.prune, "prune")?;
    let symbolic = !a.no_symbolic && cfg.get("symbolic")?.unwrap_or(true);
    k.seed = sub_seed(seed, 1);
    k.validate()?;
    m.set("kan", &k);
    m.set("split", frac);
    m.set("prune", prune);
    m.set("symbolic", symbolic);
    m.seeds.insert("seed".into(), seed);
    m.seeds.insert("split".into(), sub_seed(seed, 0));
    m.seeds.insert("init".into(), k.seed);

    let (train, test) = split(&ds, frac, sub_seed(seed, 0))?;
    let (mut net, outcome) = fit_network(&train, &k)?;
    let hist = a.out_dir.join(HISTORY_FILE);
    let mut w = csv::Writer::from_path(&hist).map_err(|e| Error::Data(format!("{}: {e}", hist.display())))?;
    for r in &outcome.history {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(&hist, e))?;
    m.output(&hist);
    if let Some(t) = prune {
        let rep = net.prune(&train.rows, t)?;
        println!("pruned {} edges below importance {t}", rep.pruned.len());
    }
    let label = format!("KAN {}", shape_label(&net.shape));
    let mut rows = vec![MethodRow {
        method: label.clone(),
        report: test_metrics(&net.forward(&test.rows)?, &test)?,
        expression: None,
        validity: None,
    }];
    let ck = a.out_dir.join(KAN_FILE);
    kan::save(&net, &ck)?;
    m.output(&ck);
    let graph = a.out_dir.join(GRAPH_FILE);
    write_graph_csv(&net, &train.rows, &graph)?;
    m.output(&graph);

    let mut saved = Vec::new();
    if symbolic {
        let mut sym = net.clone();
        let fits = auto_symbolic(&mut sym, &train.rows, &DEFAULT_LIBRARY)?;
        for f in &fits {
            println!("edge ({},{},{}) -> {} (R2 {:.4})", f.layer, f.from, f.to, f.family.name(), f.r2);
        }
        retrain_affine(&mut sym, &train.rows, &train.target, RETRAIN_ITERATIONS)?;
        let expr = extract_expression(&sym)?;
        let report = test_metrics(&expr.evaluate(&test.raw_rows())?, &test)?;
        let validity = validity_of(&expr, &ds)?;
        let method = format!("{label} auto-symbolic");
        let record = ExpressionRecord::from_tree(&expr, &ds.feature_names);
        rows.push(MethodRow {
            method: method.clone(),
            report,
            expression: Some(record.infix.clone()),
            validity: Some(validity.verdict),
        });
        saved.push(SavedExpression { method, expression: record, validity: Some(validity) });
        let p = a.out_dir.join(KAN_SYMBOLIC_FILE);
        kan::save(&sym, &p)?;
        m.output(&p);
    }
    write_results(&a.out_dir, &rows, &saved, m)?;
    print!("{}", render_summary("KAN test metrics", &rows));
    Ok(())
}

fn train_dsr(a: &TrainDsrArgs, cfg: &ConfigFile, m: &mut RunManifest) -> Result<()> {
    let ds = load_normalized(&a.data, m)?;
    let kind: PolicyKind = cfg.pick(a.policy.clone(), "policy", "rspg".to_string())?.parse()?;
    let mut t = match cfg.pick_opt(a.preset.clone(), "preset")? {
        Some(p) => TrainerConfig::preset(&p, kind)?,
        None => TrainerConfig { policy_kind: kind, ..Default::default() },
    };
    t.epsilon = cfg.pick(a.epsilon, "epsilon", t.epsilon)?;
    t.ewma_alpha = cfg.pick(a.ewma_alpha, "ewma_alpha", t.ewma_alpha)?;
    t.queue_k = cfg.pick(a.queue_k, "queue_k", t.queue_k)?;
    t.batch_size = cfg.pick(a.batch_size, "batch_size", t.batch_size)?;
    t.learning_rate = cfg.pick(a.lr, "learning_rate", t.learning_rate)?;
    t.entropy_weight = cfg.pick(a.entropy_weight, "entropy_weight", t.entropy_weight)?;
    t.sample_budget = cfg.pick(a.samples, "samples", t.sample_budget)?;
    t.threshold = cfg.pick(None, "threshold", t.threshold)?;
    if let Some(v) = cfg.get("vocabulary")? {
        t.vocabulary = v;
    }
    let base_cs = ConstraintSet::default();
    let cs = ConstraintSet {
        min_len: cfg.pick(a.min_len, "min_len", base_cs.min_len)?,
        max_len: cfg.pick(a.max_len, "max_len", base_cs.max_len)?,
        ..base_cs
    };
    let seed = cfg.pick(a.seed, "seed", 0)?;
    let frac = cfg.pick(a.split, "split", 0.8)?;
    t.seed = sub_seed(seed, 1);
    t.validate()?;
    cs.validate()?;
    m.set("dsr", &t);
    m.set("constraints", &cs);
    m.set("split", frac);
    m.seeds.insert("seed".into(), seed);
    m.seeds.insert("split".into(), sub_seed(seed, 0));
    m.seeds.insert("policy".into(), t.seed);

    let (train, test) = split(&ds, frac, sub_seed(seed, 0))?;
    let result = dsr::train(&t, &train, &cs)?;
    let hist = a.out_dir.join(HISTORY_FILE);
    dsr::write_history_csv(&result.history, &hist)?;
    m.output(&hist);

    let expr = match &ds.norm {
        Some(maxima) => result.best.with_scaled_inputs(maxima),
        None => result.best.clone(),
    };
    let report = test_metrics(&expr.evaluate(&test.raw_rows())?, &test)?;
    let validity = validity_of(&expr, &ds)?;
    let method = format!("DSR-{}", kind.to_string().to_uppercase());
    let record = ExpressionRecord::from_tree(&expr, &ds.feature_names);
    println!("best reward {:.6} after {} samples", result.best_reward, result.samples_used);
    let rows = vec![MethodRow {
        method: method.clone(),
        report,
        expression: Some(record.infix.clone()),
        validity: Some(validity.verdict),
    }];
    let saved = vec![SavedExpression { method, expression: record, validity: Some(validity) }];
    write_results(&a.out_dir, &rows, &saved, m)?;
    print!("{}", render_summary("DSR test metrics", &rows));
    Ok(())
}

enum Model {
    Expr(ExpressionTree),
    Kan(KanNetwork),
}

fn parse_expr(tokens: &str, constants: Option<&str>) -> Result<ExpressionTree> {
    let toks = tokens.split_whitespace().map(Token::parse).collect::<Result<Vec<_>>>()?;
    match constants {
        None => ExpressionTree::new(toks),
        Some(c) => {
            let vals = c
                .split(',')
                .map(|v| v.trim().parse::<f64>().map_err(|_| Error::Config(format!("bad constant '{v}'"))))
                .collect::<Result<Vec<_>>>()?;
            ExpressionTree::with_constants(toks, vals)
        }
    }
}

fn load_saved(path: &Path, label: &str) -> Result<SavedExpression> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let list: Vec<SavedExpression> = serde_json::from_str(&text)?;
    let pick = list.iter().find(|s| s.method == label).or(list.first());
    pick.cloned().ok_or_else(|| Error::Data(format!("{} holds no expressions", path.display())))
}

fn eval(a: &EvalArgs, cfg: &ConfigFile, m: &mut RunManifest) -> Result<()> {
    let ds = Dataset::read_csv(&a.data)?.denormalized();
    m.input(&a.data)?;
    let mut label = a.label.clone();
    let model = if let Some(e) = &a.expr {
        Model::Expr(parse_expr(e, a.constants.as_deref())?)
    } else if let Some(p) = &a.record {
        m.input(p)?;
        let s = load_saved(p, &a.label)?;
        label = s.method.clone();
        Model::Expr(s.expression.to_tree()?)
    } else if let Some(p) = &a.checkpoint {
        m.input(p)?;
        Model::Kan(kan::load(p)?)
    } else {
        return Err(Error::Config("one of --expr, --record or --checkpoint is required".into()));
    };
    let mc = MonteCarloConfig {
        runs: cfg.pick(a.runs, "runs", 10)?,
        train_fraction: cfg.pick(a.split, "split", 0.8)?,
        base_seed: cfg.pick(a.seed, "seed", 0)?,
        ..Default::default()
    };
    m.set("runs", mc.runs);
    m.set("split", mc.train_fraction);
    m.set("refit", a.refit);
    m.seeds.insert("seed".into(), mc.base_seed);

    let report = match &model {
        Model::Expr(tree) => {
            if tree.min_features() > ds.n_features() {
                return Err(Error::Shape { expected: tree.min_features(), got: ds.n_features() });
            }
            monte_carlo_eval(&ds, &mc, |train, test, _| {
                let consts = if a.refit {
                    optimize_constants(tree, &Columns::from_rows(&train.rows), &train.target)?.constants
                } else {
                    tree.constants().to_vec()
                };
                Ok(tree.evaluate_columns(&Columns::from_rows(&test.rows), &consts))
            })?
        }
        Model::Kan(net) => monte_carlo_eval(&ds, &mc, |_, test, _| net.forward_unnormalized(&test.rows))?,
    };
    let symbolic = match &model {
        Model::Expr(t) => Some(t.clone()),
        Model::Kan(net) if net.is_fully_symbolic() => Some(extract_expression(net)?),
        Model::Kan(_) => None,
    };
    let validity = symbolic.as_ref().map(|e| validity_of(e, &ds)).transpose()?;
    if let Some(v) = &validity {
        println!("validity: {}", v.verdict);
        for d in &v.diagnostics {
            println!("  {d}");
        }
        let p = a.out_dir.join(super::commands::VALIDITY_FILE);
        fs::write(&p, serde_json::to_string_pretty(v)? + "\n").map_err(|e| Error::io(&p, e))?;
        m.output(&p);
    }
    let mut rows = vec![MethodRow {
        method: label,
        report,
        expression: symbolic.as_ref().map(|e| e.to_infix_named(&ds.feature_names)),
        validity: validity.as_ref().map(|v| v.verdict),
    }];
    if let Some(site) = cfg.pick_opt(a.with_baselines.clone(), "with_baselines")? {
        rows.extend(baseline_rows(&ds, site.parse()?)?);
    }
    write_results(&a.out_dir, &rows, &[], m)?;
    print!("{}", render_summary(&format!("Evaluation over {} runs", mc.runs), &rows));
    Ok(())
}

fn baseline_rows(ds: &Dataset, site: Site) -> Result<Vec<MethodRow>> {
    baseline_table(ds, site)?
        .into_iter()
        .map(|b| {
            let pairs = ds.target.iter().copied().zip(b.predictions.iter().copied()).collect();
            Ok(MethodRow {
                method: b.method,
                report: MetricsReport::single(b.metrics, pairs),
                expression: None,
                validity: None,
            })
        })
        .collect()
}

fn baseline(a: &BaselineArgs, m: &mut RunManifest) -> Result<()> {
    let ds = Dataset::read_csv(&a.data)?;
    m.input(&a.data)?;
    let site: Site = a.site.parse()?;
    m.set("site", site);
    let rows = baseline_rows(&ds, site)?;
    write_results(&a.out_dir, &rows, &[], m)?;
    print!("{}", render_summary(&format!("Baselines ({})", a.site), &rows));
    Ok(())
}

fn report(a: &ReportArgs, m: &mut RunManifest) -> Result<()> {
    let mut rows = Vec::new();
    for input in &a.inputs {
        let path: PathBuf = if input.is_dir() { input.join(METRICS_FILE) } else { input.clone() };
        if !path.exists() {
            return Err(Error::Data(format!("{} does not exist", path.display())));
        }
        m.input(&path)?;
        rows.extend(read_metrics_csv(&path)?);
    }
    let summary = render_summary(&a.title, &rows);
    let p = a.out_dir.join(SUMMARY_FILE);
    fs::write(&p, &summary).map_err(|e| Error::io(&p, e))?;
    m.output(&p);
    let metrics = a.out_dir.join(METRICS_FILE);
    write_metrics_csv(&metrics, &rows)?;
    m.output(&metrics);
    print!("{summary}");
    Ok(())
}
