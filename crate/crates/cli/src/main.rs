mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use pirank::data::Distribution;
use pirank::losses::LossKind;

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_NUMERIC: u8 = 3;

/// Comma-separated values; `none` or an empty string is the empty list.
#[derive(Debug, Clone, PartialEq)]
pub struct List<T>(pub Vec<T>);

impl<T: FromStr> FromStr for List<T>
where
    T::Err: fmt::Display,
{
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if s.is_empty() || s == "none" {
            return Ok(List(Vec::new()));
        }
        s.split(',')
            .map(|p| p.trim().parse::<T>().map_err(|e| format!("`{p}`: {e}")))
            .collect::<Result<_, _>>()
            .map(List)
    }
}

#[derive(Debug, Parser)]
#[command(name = "pirank", version, about = "Learning to rank with relaxed sorting losses")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic LETOR dataset and its metadata sidecar.
    #[command(args_override_self = true)]
    GenSynthetic(GenArgs),
    /// Train a scorer; writes a checkpoint and a per-epoch CSV.
    #[command(args_override_self = true)]
    Train(TrainArgs),
    /// Per-query metrics of a checkpoint, optionally compared with other runs.
    #[command(args_override_self = true)]
    Evaluate(EvalArgs),
    /// Time fixed-step training across list lengths and tree depths.
    #[command(args_override_self = true)]
    BenchScaling(BenchArgs),
}

/// Every verb also accepts `--config FILE` with `key = value` lines.
#[derive(Debug, Args)]
pub struct GenArgs {
    /// Number of queries.
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = 20)]
    pub list_size: usize,
    #[arg(long, default_value_t = 10)]
    pub doc_features: usize,
    #[arg(long, default_value_t = 2)]
    pub query_features: usize,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub label_min: f64,
    #[arg(long, default_value_t = 4.0, allow_negative_numbers = true)]
    pub label_max: f64,
    /// Document feature distribution: uniform:a:b, normal:m:s or constant:v.
    #[arg(long, default_value = "uniform:0:1")]
    pub phi: Distribution,
    /// Query coefficient distribution, same forms as --phi.
    #[arg(long, default_value = "uniform:0:1")]
    pub psi: Distribution,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write train/valid/test files split by these fractions.
    #[arg(long)]
    pub split: Option<List<f64>>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training data (LETOR text, optionally gzip).
    #[arg(long)]
    pub train: PathBuf,
    /// Validation data; without it the training split is used for early stopping.
    #[arg(long)]
    pub valid: Option<PathBuf>,
    /// Feature width; defaults to the largest feature id in the training file.
    #[arg(long)]
    pub num_features: Option<usize>,
    /// Pad or truncate every query to this many items.
    #[arg(long)]
    pub list_size: Option<usize>,
    /// Reject over-long queries instead of dropping their tail.
    #[arg(long)]
    pub strict_length: bool,
    #[arg(long, default_value = "pirank-ndcg", value_parser = parse_loss)]
    pub loss: LossKind,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long, default_value_t = 1.0)]
    pub tau: f64,
    /// Per-epoch temperature decay factor in (0, 1].
    #[arg(long)]
    pub tau_decay: Option<f64>,
    #[arg(long, default_value_t = 1)]
    pub depth: usize,
    /// Ratio between consecutive tree-level temperatures.
    #[arg(long, default_value_t = 1.0)]
    pub temperature_ratio: f64,
    #[arg(long)]
    pub straight_through: bool,
    /// Hidden layer widths; `none` trains a linear scorer.
    #[arg(long, default_value = "64,32")]
    pub hidden: List<usize>,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    /// Epochs without validation improvement before stopping; 0 disables.
    #[arg(long, default_value_t = 10)]
    pub patience: usize,
    #[arg(long, default_value_t = 10)]
    pub early_stop_k: usize,
    #[arg(long, default_value = "1,5,10")]
    pub cutoffs: List<usize>,
    #[arg(long, default_value_t = 1e3)]
    pub grad_norm_warn: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Checkpoint to evaluate (with --data).
    #[arg(long, requires = "data", conflicts_with = "metrics")]
    pub model: Option<PathBuf>,
    #[arg(long, requires = "model")]
    pub data: Option<PathBuf>,
    /// Existing per-query metric CSV to use instead of a checkpoint.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    /// Method name in the comparison.
    #[arg(long, default_value = "model")]
    pub name: String,
    #[arg(long, default_value = "1,5,10")]
    pub cutoffs: List<usize>,
    /// Per-query metric CSV of another method, as `NAME=PATH` or `PATH`.
    #[arg(long)]
    pub compare: Vec<String>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value = "125,1000,2197,3375")]
    pub lengths: List<usize>,
    #[arg(long, default_value = "1,3")]
    pub depths: List<usize>,
    #[arg(long, default_value_t = 100)]
    pub steps: usize,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    #[arg(long, default_value_t = 1.0)]
    pub tau: f64,
    #[arg(long, default_value = "none")]
    pub hidden: List<usize>,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// Per-cell wall-clock cap; capped cells extrapolate to the full step count.
    #[arg(long)]
    pub max_seconds: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

fn parse_loss(s: &str) -> Result<LossKind, String> {
    s.parse()
}

/// A failed run: message for stderr and the process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub msg: String,
}

impl Failure {
    pub fn usage(msg: impl fmt::Display) -> Self {
        Self {
            code: EXIT_USAGE,
            msg: msg.to_string(),
        }
    }

    pub fn data(msg: impl fmt::Display) -> Self {
        Self {
            code: EXIT_DATA,
            msg: msg.to_string(),
        }
    }
}

fn run() -> Result<(), Failure> {
    let argv = config::expand(std::env::args_os().collect()).map_err(Failure::usage)?;
    let matches = match Cli::command().try_get_matches_from(argv) {
        Ok(m) => m,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return if code == 0 {
                Ok(())
            } else {
                Err(Failure {
                    code,
                    msg: String::new(),
                })
            };
        }
    };
    let cli = Cli::from_arg_matches(&matches).map_err(Failure::usage)?;
    let (verb, sub) = matches.subcommand().expect("subcommand is required");
    let cmd = Cli::command();
    let manifest = config::manifest(cmd.find_subcommand(verb).expect("parsed subcommand exists"), sub);
    match cli.command {
        Command::GenSynthetic(a) => commands::gen_synthetic(&a, &manifest),
        Command::Train(a) => commands::train(&a, &manifest),
        Command::Evaluate(a) => commands::evaluate(&a, &manifest),
        Command::BenchScaling(a) => commands::bench_scaling(&a, &manifest),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            if !f.msg.is_empty() {
                eprintln!("error: {}", f.msg);
            }
            ExitCode::from(f.code)
        }
    }
}
