//! The `autopl` command-line tool: dataset generation, KAN and DSR training,
//! evaluation, analytical baselines and report assembly.

mod commands;
mod config;
mod manifest;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::{sub_seed, EXPRESSIONS_FILE, GRAPH_FILE, HISTORY_FILE, METRICS_FILE, SCATTER_FILE};
pub use config::ConfigFile;
pub use manifest::{sha256_file, InputFile, RunManifest, MANIFEST_FILE};

use crate::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_TRAINING: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "autopl", version, about = "Discover pathloss models with KANs and deep symbolic regression")]
pub struct Cli {
    /// Worker threads; 1 gives bit-reproducible runs.
    #[arg(long, global = true, env = "AUTOPL_THREADS")]
    pub threads: Option<usize>,

    /// TOML file of flat settings; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset or ingest a measurement CSV.
    GenData(GenDataArgs),
    /// Train a KAN, then map its edges to symbolic functions.
    TrainKan(TrainKanArgs),
    /// Search for an expression with deep symbolic regression.
    TrainDsr(TrainDsrArgs),
    /// Score an expression or checkpoint on a dataset.
    Eval(EvalArgs),
    /// Score the analytical baseline models on a measurement dataset.
    Baseline(BaselineArgs),
    /// Merge metrics from earlier runs into one table.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// Synthetic model: abg or ci.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Divide every feature by its largest magnitude and write a sidecar.
    #[arg(long)]
    pub normalize: bool,
    /// Measurement CSV to ingest instead of generating data.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Column roles for --input, e.g. `dist=d,pl=target,id=ignore`.
    #[arg(long)]
    pub schema: Option<String>,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainKanArgs {
    /// Dataset CSV with a `pl_db` column.
    #[arg(long)]
    pub data: PathBuf,
    /// Tuned settings: abg, ci, indoor or outdoor.
    #[arg(long)]
    pub preset: Option<String>,
    /// Layer widths, e.g. `4,4,1`.
    #[arg(long)]
    pub shape: Option<String>,
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub order: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Training fraction of the random split.
    #[arg(long)]
    pub split: Option<f64>,
    /// Deactivate edges whose relative importance is below this value.
    #[arg(long)]
    pub prune: Option<f64>,
    /// Stop after spline training.
    #[arg(long)]
    pub no_symbolic: bool,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainDsrArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// rspg, vpg or pqt.
    #[arg(long)]
    pub policy: Option<String>,
    /// Tuned settings for a model: abg, ci, indoor or outdoor.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub ewma_alpha: Option<f64>,
    #[arg(long)]
    pub queue_k: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub entropy_weight: Option<f64>,
    /// Total expressions sampled.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub min_len: Option<usize>,
    #[arg(long)]
    pub max_len: Option<usize>,
    #[arg(long)]
    pub split: Option<f64>,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Pre-order tokens, e.g. `add mul 20 log10 x0 const`.
    #[arg(long, conflicts_with_all = ["record", "checkpoint"])]
    pub expr: Option<String>,
    /// Comma-separated values for the `const` placeholders of --expr.
    #[arg(long, requires = "expr")]
    pub constants: Option<String>,
    /// Expression record JSON written by train-kan or train-dsr.
    #[arg(long, conflicts_with = "checkpoint")]
    pub record: Option<PathBuf>,
    /// KAN checkpoint.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub split: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Refit expression constants on each training split.
    #[arg(long)]
    pub refit: bool,
    /// Append analytical baseline rows for a site: indoor or outdoor.
    #[arg(long)]
    pub with_baselines: Option<String>,
    #[arg(long, default_value = "Expression")]
    pub label: String,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// indoor or outdoor.
    #[arg(long)]
    pub site: String,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Run directories (or metrics CSV files) to merge.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long, default_value = "Results")]
    pub title: String,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
}

/// Short machine-readable class used in the error prefix.
pub fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Config(_) | Error::Expression(_) => "usage",
        Error::Domain(_) | Error::Data(_) | Error::Shape { .. } | Error::Io { .. } | Error::Parse(_) => "data",
        Error::Version { .. } => "data",
        Error::Unfittable | Error::DeadEnd(_) | Error::Training(_) => "training",
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match error_kind(e) {
        "usage" => EXIT_USAGE,
        "data" => EXIT_DATA,
        _ => EXIT_TRAINING,
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code. Errors go to stderr as `error[<kind>]: <message>`.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            if code == EXIT_OK {
                let _ = e.print();
            } else {
                eprintln!("error[usage]: {}", e.to_string().lines().next().unwrap_or("invalid arguments"));
            }
            return code;
        }
    };
    match commands::dispatch(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error[{}]: {}", error_kind(&e), e.to_string().replace('\n', " "));
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_by_error_class() {
        assert_eq!(exit_code(&Error::Config("x".into())), EXIT_USAGE);
        assert_eq!(exit_code(&Error::Data("x".into())), EXIT_DATA);
        assert_eq!(exit_code(&Error::Training("x".into())), EXIT_TRAINING);
        assert_eq!(run(["autopl", "--bogus"]), EXIT_USAGE);
        assert_eq!(run(["autopl", "--help"]), EXIT_OK);
    }
}
