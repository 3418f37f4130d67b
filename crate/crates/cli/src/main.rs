//! `arteval`: dataset validation, batch sampling, reward scoring, metrics and
//! the artifact benchmark from the command line.
//!
//! Exit codes: 0 success, 1 domain failure, 2 usage or I/O failure.

mod commands;
mod error;
mod io;
mod mock;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use arteval_core::dataset::Split;
use arteval_core::Exec;

#[derive(Debug, Parser)]
#[command(
    name = "arteval",
    version,
    about = "Image artifact assessor evaluation toolkit"
)]
struct Cli {
    /// Run every data-parallel step on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check an annotation file against the taxonomy and annotation lints.
    Validate(ValidateArgs),
    /// Draw 4:1:1:1:1 class-balanced training batches.
    Sample(SampleArgs),
    /// Score model responses against ground truth.
    Reward(RewardArgs),
    /// Precision, recall and F1 of predictions against ground truth.
    Metrics(MetricsArgs),
    /// Verify, assess and score generated benchmark images.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    pub dataset: PathBuf,
    /// Flag records with more than this many marked issues.
    #[arg(long, default_value_t = 2)]
    pub max_issues: usize,
    /// Treat lint warnings as failures.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, value_parser = parse_batch_size)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub n_batches: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Only sample records of this split.
    #[arg(long, default_value = "train")]
    pub split: Split,
    /// Tags marking hard positives; repeatable. Defaults to `hard_positive_hand`.
    #[arg(long = "hard-positive-tag")]
    pub hard_positive_tags: Vec<String>,
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..))]
    pub multiplier: u64,
}

fn parse_batch_size(s: &str) -> Result<usize, String> {
    let n: usize = s.parse().map_err(|e| format!("{e}"))?;
    if n == 0 || !n.is_multiple_of(arteval_core::sampler::RATIO_SUM) {
        return Err(format!("{n} is not a positive multiple of 8"));
    }
    Ok(n)
}

#[derive(Debug, Args)]
pub struct RewardArgs {
    #[arg(long)]
    pub gt: PathBuf,
    /// JSONL of `{"id", "response"}`.
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Use an in-process judge that accepts every answer.
    #[arg(long, conflicts_with = "judge_url")]
    pub mock_judge: bool,
    /// Judge endpoint; falls back to MAGIC_JUDGE_URL.
    #[arg(long)]
    pub judge_url: Option<String>,
    /// Only score ground-truth records of this split.
    #[arg(long)]
    pub split: Option<Split>,
    #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u64).range(1..))]
    pub max_inflight: u64,
    /// Seed for retry jitter.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    #[arg(long)]
    pub gt: PathBuf,
    /// JSONL of `{"id", "response"}` or `{"id", "normal", "labels"}`.
    #[arg(long)]
    pub pred: PathBuf,
    /// Report JSON.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the comparison-table CSV row.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Model name for the CSV row.
    #[arg(long, default_value = "model")]
    pub model: String,
    #[arg(long)]
    pub split: Option<Split>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Prompt JSONL: `{"id", "text", "subject", "category"}`.
    #[arg(long)]
    pub prompts: PathBuf,
    /// Directory holding `<prompt id>.{png,jpg,jpeg,webp}`.
    #[arg(long)]
    pub images: PathBuf,
    /// Score report JSON.
    #[arg(long)]
    pub report: PathBuf,
    /// Per-item audit JSONL.
    #[arg(long)]
    pub audit: Option<PathBuf>,
    /// Reuse completed items from the audit file.
    #[arg(long, requires = "audit")]
    pub resume: bool,
    /// Use file-driven in-process verifier and assessor.
    #[arg(long)]
    pub mock: bool,
    /// Falls back to MAGIC_VERIFIER_URL.
    #[arg(long, conflicts_with = "mock")]
    pub verifier_url: Option<String>,
    /// Falls back to MAGIC_ASSESSOR_URL.
    #[arg(long, conflicts_with = "mock")]
    pub assessor_url: Option<String>,
    #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u64).range(1..))]
    pub max_inflight: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let exec = if cli.sequential {
        Exec::Sequential
    } else {
        Exec::Parallel
    };
    let result = match &cli.command {
        Command::Validate(a) => commands::validate(a, exec),
        Command::Sample(a) => commands::sample(a, exec),
        Command::Reward(a) => commands::reward(a, exec),
        Command::Metrics(a) => commands::metrics(a, exec),
        Command::Bench(a) => commands::bench(a, exec),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
