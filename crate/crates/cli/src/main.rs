use std::path::PathBuf;
use std::process::ExitCode;

use bcopt_cli::{Overrides, SolverChoice, Status};
use clap::{Args, Parser, Subcommand};

/// Weighted sum-rate maximization for the MIMO broadcast channel.
#[derive(Parser)]
#[command(name = "bcopt", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the scenario in a JSON config and write traces and a summary.
    Run(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    config: PathBuf,
    /// Overrides the scenario's solver selection.
    #[arg(long, value_enum)]
    solver: Option<SolverChoice>,
    /// Overrides the scenario's channel seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: the scenario's `output_dir`, else `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Stopping tolerance applied to every solver.
    #[arg(long)]
    tol: Option<f64>,
    /// Outer iteration cap applied to every solver.
    #[arg(long = "max-iter")]
    max_iter: Option<usize>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("BCOPT_LOG", "warn")).init();
    let Command::Run(args) = Cli::parse().command;
    let overrides = Overrides { seed: args.seed, solver: args.solver, tol: args.tol, max_iter: args.max_iter };
    match bcopt_cli::run(&args.config, &overrides, args.out.as_deref()) {
        Ok((status, files)) => {
            for f in files {
                println!("{}", f.display());
            }
            if status == Status::Flagged {
                eprintln!("warning: some solver did not converge to a feasible point; see summary.json");
            }
            ExitCode::from(status as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(Status::Error as u8)
        }
    }
}
