//! `atk`: plan, estimate, simulate and benchmark two-stage approximate top-k.

mod commands;
mod output;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "atk", version, about = "Two-stage approximate top-k toolkit")]
struct Cli {
    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Table, global = true)]
    format: Format,

    /// Worker thread cap (0 = all cores).
    #[arg(long, env = "ATK_THREADS", global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Csv,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Choose (K', B) meeting a recall target.
    Plan(commands::PlanArgs),
    /// Expected recall of one configuration.
    EstimateRecall(commands::EstimateArgs),
    /// Empirical recall of the full pipeline on random permutations.
    Simulate(commands::SimulateArgs),
    /// Time stage 1, stage 2 and (optionally) exact top-k.
    Bench(commands::BenchArgs),
    /// Reduction factor of K' > 1 over K' = 1 across (K/N, N).
    Grid(commands::GridArgs),
    /// Maximum inner-product search against a brute-force oracle.
    Mips(commands::MipsArgs),
    /// Runtime-model queries for accelerator profiles.
    Model(commands::ModelArgs),
}

/// Shared `(N, B, K, K')` flags.
#[derive(Args, Debug, Clone)]
pub struct ConfigArgs {
    #[arg(long)]
    n: u64,
    /// Number of buckets.
    #[arg(long)]
    b: u64,
    #[arg(long)]
    k: u64,
    #[arg(long, default_value_t = 1)]
    kprime: u64,
    /// B must be a multiple of this (or equal N).
    #[arg(long, default_value_t = 1)]
    lane_multiple: u64,
}

fn configure_threads(threads: Option<usize>) -> anyhow::Result<()> {
    let Some(n) = threads else { return Ok(()) };
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| anyhow::anyhow!("cannot configure {n} threads: {e}"))?;
    #[cfg(not(feature = "parallel"))]
    log::warn!("--threads {n} ignored: built without the parallel feature");
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<approx_topk::Error>() {
        Some(approx_topk::Error::NoFeasibleConfig { .. }) => 2,
        _ if err.is::<commands::EmptyResult>() => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let run = || -> anyhow::Result<()> {
        configure_threads(cli.threads)?;
        let report = match &cli.command {
            Command::Plan(a) => commands::plan(a)?,
            Command::EstimateRecall(a) => commands::estimate_recall(a)?,
            Command::Simulate(a) => commands::simulate(a)?,
            Command::Bench(a) => commands::bench(a)?,
            Command::Grid(a) => commands::grid(a)?,
            Command::Mips(a) => commands::mips(a)?,
            Command::Model(a) => commands::model(a)?,
        };
        output::emit(&report, cli.format)
    };
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
