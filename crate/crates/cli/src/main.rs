mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "lqioc", version, about = "Inverse optimal control for indefinite LQ problems")]
struct Cli {
    /// Worker threads for data-parallel stages; 0 uses all cores, 1 runs sequentially.
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check the standing assumptions and the feasibility of the forward problem.
    ///
    /// Exit status: 0 feasible, 2 infeasible, 3 marginal.
    Check(CheckArgs),
    /// Generate a dataset of trajectories under the optimal feedback law.
    Simulate(SimulateArgs),
    /// Estimate (Q, q) from a dataset.
    Estimate(EstimateArgs),
    /// Run the convergence benchmark and write its tables.
    Bench(BenchArgs),
    /// Compare the feedback rollout with a direct stacked QP solve.
    ///
    /// Exit status: 0 when the maximum deviation is at most 1e-6, 2 otherwise.
    Oracle(OracleArgs),
}

#[derive(Args, Debug)]
struct CheckArgs {
    /// Scenario configuration (TOML).
    #[arg(long)]
    config: PathBuf,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Scenario configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Number of trials.
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    /// Overrides the `seed` from the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Output dataset path (JSON lines); defaults to `io.out` from the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Drop true states and controls from the output.
    #[arg(long, default_value_t = false)]
    strip_truth: bool,
}

#[derive(Args, Debug)]
struct EstimateArgs {
    /// Scenario configuration (TOML); supplies the known dynamics and noise.
    #[arg(long)]
    config: PathBuf,
    /// Dataset path; defaults to `io.data` from the configuration.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Norm-ball radius; overrides `estimator.phi`.
    #[arg(long)]
    phi: Option<f64>,
    /// Drop the norm-ball bounds.
    #[arg(long, default_value_t = false, conflicts_with = "phi")]
    no_bounds: bool,
    /// Result path (JSON); prints to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the assembled problem in SDPA sparse format.
    #[arg(long)]
    dump_sdp: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Benchmark plan (TOML); the desk-scale pursuit-evasion plan when omitted.
    #[arg(long)]
    plan: Option<PathBuf>,
    /// Directory for cells.csv, aggregate.csv and summary.json.
    #[arg(long)]
    out_dir: PathBuf,
    /// Use 100 batches and M = 100, 200, ..., 50000.
    #[arg(long, default_value_t = false)]
    paper_scale: bool,
}

#[derive(Args, Debug)]
struct OracleArgs {
    /// Scenario configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Number of initial states drawn from the configured law.
    #[arg(long, default_value_t = 16)]
    samples: usize,
    /// Overrides the `seed` from the configuration.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let exec = lqioc::exec::Execution::from_workers(Some(cli.workers));
    let result = match &cli.command {
        Command::Check(a) => commands::check(a),
        Command::Simulate(a) => commands::simulate(a, exec),
        Command::Estimate(a) => commands::estimate(a, exec),
        Command::Bench(a) => commands::bench(a, exec),
        Command::Oracle(a) => commands::oracle(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
