//! Command-line front end: dataset generation, index build, queries,
//! benchmarks and layout statistics.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use recann::io::IoBackend;
use recann::Error;

/// Exit codes beyond success.
const EXIT_USAGE: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_CORRUPT: u8 = 4;
const EXIT_OTHER: u8 = 1;

#[derive(Parser, Debug)]
#[command(name = "recann", version, about = "SSD-resident graph ANN index")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a seeded clustered dataset, its queries and ground truth.
    Gen(GenArgs),
    /// Build an index file from an fvecs/bvecs dataset.
    Build(BuildArgs),
    /// Answer queries; one line per query.
    Query(QueryArgs),
    /// Run the ablation ladder and optional sweeps, writing CSV.
    Bench(BenchArgs),
    /// Print layout and co-placement metrics of an index as CSV.
    Stats(StatsArgs),
}

#[derive(Args, Debug)]
pub struct GenArgs {
    /// Output prefix; writes PREFIX.base.fvecs, PREFIX.query.fvecs and PREFIX.gt.ivecs.
    pub prefix: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    #[arg(long, default_value_t = 32)]
    pub dim: usize,
    #[arg(long, default_value_t = 100)]
    pub queries: usize,
    /// Ground-truth depth.
    #[arg(long, default_value_t = 100)]
    pub gt_k: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct BuildArgs {
    pub dataset: PathBuf,
    pub out: PathBuf,
    /// TOML parameter file; flags override its values.
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Read only the first LIMIT vectors.
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long)]
    pub page_size: Option<usize>,
    #[arg(long)]
    pub degree: Option<usize>,
    #[arg(long)]
    pub l_build: Option<usize>,
    /// Affinity threshold percentile; 0 disables co-placement.
    #[arg(long)]
    pub tau_percentile: Option<f32>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug, Clone)]
pub struct RuntimeArgs {
    /// Pool capacity as a fraction of n.
    #[arg(long, default_value_t = 0.1)]
    pub buffer_ratio: f64,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// Concurrent queries per worker; calibrated from --alpha when absent.
    #[arg(long)]
    pub batch: Option<usize>,
    /// Overlap factor for the calibrated batch size.
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    /// Cache-aware beam width; 0 disables pivoting.
    #[arg(long, default_value_t = 4)]
    pub beam: usize,
    /// Candidates prefetched per step.
    #[arg(long, default_value_t = 4)]
    pub prefetch: usize,
    /// `real` or `sim:<latency-us>`.
    #[arg(long, default_value = "real", value_parser = parse_backend)]
    pub io_backend: IoBackend,
    /// Read only the first LIMIT queries.
    #[arg(long)]
    pub limit: Option<usize>,
}

#[derive(Args, Debug)]
pub struct QueryArgs {
    pub index: PathBuf,
    pub queries: PathBuf,
    /// Results file; standard output when absent.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    #[arg(short, long, default_value_t = 10)]
    pub k: usize,
    /// Candidate-list size.
    #[arg(short = 'L', long, default_value_t = 64)]
    pub list_size: usize,
    #[command(flatten)]
    pub runtime: RuntimeArgs,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    pub index: PathBuf,
    pub queries: PathBuf,
    /// Ground truth in ivecs format.
    pub gt: PathBuf,
    /// CSV destination; standard output when absent.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Candidate-list sizes for every ladder rung.
    #[arg(long, value_delimiter = ',', default_value = "16,32,64,128")]
    pub list_sizes: Vec<usize>,
    /// Extra rows varying the batch size of the full configuration.
    #[arg(long, value_delimiter = ',')]
    pub batch_sweep: Vec<usize>,
    /// Extra rows varying the beam width of the full configuration.
    #[arg(long, value_delimiter = ',')]
    pub beam_sweep: Vec<usize>,
    #[command(flatten)]
    pub runtime: RuntimeArgs,
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    pub index: PathBuf,
}

fn parse_backend(s: &str) -> Result<IoBackend, String> {
    IoBackend::parse(s).ok_or_else(|| format!("expected `real` or `sim:<latency-us>`, got `{s}`"))
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidArgument(_) => EXIT_USAGE,
        Error::Io(_) => EXIT_IO,
        e if e.is_corruption() => EXIT_CORRUPT,
        _ => EXIT_OTHER,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => commands::gen(&a),
        Command::Build(a) => commands::build(&a),
        Command::Query(a) => commands::query(&a),
        Command::Bench(a) => commands::bench(&a),
        Command::Stats(a) => commands::stats(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
