//! Command-line front end for the adaptive collocation solver.

pub mod config;
pub mod expr;
pub mod problem_file;
pub mod report;

use anyhow::Result;
use lgr_ocp::refinement::{run_adaptive, RunResult, RunStatus};

use crate::config::RunConfig;

/// Process exit code for a finished run.
pub fn exit_code(status: RunStatus) -> i32 {
    match status {
        RunStatus::Converged => 0,
        RunStatus::MaxIterations => 2,
        RunStatus::SolverFailure => 1,
    }
}

/// Validates, solves and writes the selected files. Configuration problems
/// surface as errors before any solve starts.
pub fn run(config: &RunConfig) -> Result<RunResult> {
    config.validate()?;
    let ocp = config.load_problem()?;
    config.prepare_output()?;
    let opts = config.options();
    log::info!("solving {} with {:?}", ocp.name, opts);
    let result = run_adaptive(&ocp, &opts.initial_mesh(), &opts)?;
    for path in report::emit(config, &ocp, &result)? {
        log::info!("wrote {}", path.display());
    }
    Ok(result)
}
