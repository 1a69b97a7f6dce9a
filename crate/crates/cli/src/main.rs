use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lgr_ocp_cli::config::{RunConfig, SolveArgs};
use lgr_ocp_cli::{exit_code, run};

/// Adaptive Legendre-Gauss-Radau collocation for optimal control problems.
///
/// Log verbosity is read from LGR_OCP_LOG (error, warn, info, debug, trace).
#[derive(Debug, Parser)]
#[command(name = "lgr-ocp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve a built-in benchmark or a TOML problem file
    Solve(SolveArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("LGR_OCP_LOG", "warn")).init();
    let Command::Solve(args) = Cli::parse().command;

    let outcome = RunConfig::from_args(&args).and_then(|config| run(&config));
    match outcome {
        Ok(result) => {
            let last = result.history.last();
            println!(
                "{:?}: objective {}, e_max {}, N = {}, K = {}, iterations {}",
                result.status,
                result.objective().map_or("n/a".into(), |j| format!("{j:.9}")),
                last.and_then(|r| r.e_max).map_or("n/a".into(), |e| format!("{e:.3e}")),
                result.mesh.total_points(),
                result.mesh.num_intervals(),
                result.history.len(),
            );
            if !result.message.is_empty() {
                println!("{}", result.message);
            }
            ExitCode::from(exit_code(result.status) as u8)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
