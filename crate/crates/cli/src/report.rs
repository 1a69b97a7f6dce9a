//! Run reports and mesh histories.
//!
//! `report.json` layout (floats are written in shortest round-trip form,
//! non-finite values as `null`):
//!
//! ```text
//! {
//!   "config":     RunConfig echo,
//!   "problem":    { name, states, controls },
//!   "status":     "converged" | "max_iterations" | "solver_failure",
//!   "message":    string,
//!   "direction_policy": "both" | "forward_only" | "backward_only" | "auto",
//!   "skipped":    [ { direction, reason, iteration } ],
//!   "iterations": [ { iteration, mesh_points, counts, total_points, intervals,
//!                     e_max, interval_errors, residual_max, objective,
//!                     nlp_status, nlp_iterations, merges, wall_time } ],
//!   "final":      null | { objective, t0, tf, e_max, residual_max,
//!                          total_points, intervals, mesh_points, counts },
//!   "solution":   null | { tau, t, states, controls },
//!   "overlays":   [ { interval, left, right, forward, backward } ]
//! }
//! ```
//!
//! `solution` holds 1000 uniform samples of `tau` on `[-1, 1]`; `states` and
//! `controls` are one row per sample. Each overlay trace is `null` when that
//! direction was not simulated, else `{ status, failure_tau, tau, simulated,
//! collocated }` at the propagation points.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use lgr_ocp::estimate::{simulate_all, DirectionPolicy};
use lgr_ocp::ode::{IntegratorSpec, SimStatus, Trajectory};
use lgr_ocp::problem::OcpDefinition;
use lgr_ocp::refinement::{IterationRecord, RunResult, RunStatus, SkippedDirection};
use lgr_ocp::transcription::CollocationSolution;
use serde::Serialize;

use crate::config::{Format, RunConfig};

pub const SAMPLES: usize = 1000;

#[derive(Debug, Serialize)]
pub struct RunReport<'a> {
    pub config: &'a RunConfig,
    pub problem: ProblemSummary,
    pub status: RunStatus,
    pub message: &'a str,
    pub direction_policy: DirectionPolicy,
    pub skipped: &'a [SkippedDirection],
    pub iterations: &'a [IterationRecord],
    #[serde(rename = "final")]
    pub final_result: Option<FinalSummary>,
    pub solution: Option<SampledSolution>,
    pub overlays: Vec<Overlay>,
}

#[derive(Debug, Serialize)]
pub struct ProblemSummary {
    pub name: String,
    pub states: usize,
    pub controls: usize,
}

#[derive(Debug, Serialize)]
pub struct FinalSummary {
    pub objective: f64,
    pub t0: f64,
    pub tf: f64,
    pub e_max: Option<f64>,
    pub residual_max: Option<f64>,
    pub total_points: usize,
    pub intervals: usize,
    pub mesh_points: Vec<f64>,
    pub counts: Vec<usize>,
}

#[derive(Debug, Serialize)]
pub struct SampledSolution {
    pub tau: Vec<f64>,
    pub t: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub controls: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize)]
pub struct Overlay {
    pub interval: usize,
    pub left: f64,
    pub right: f64,
    pub forward: Option<Trace>,
    pub backward: Option<Trace>,
}

#[derive(Debug, Serialize)]
pub struct Trace {
    pub status: SimStatus,
    pub failure_tau: Option<f64>,
    pub tau: Vec<f64>,
    pub simulated: Vec<Vec<f64>>,
    pub collocated: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize)]
struct MeshSnapshot<'a> {
    iteration: usize,
    mesh_points: &'a [f64],
    counts: &'a [usize],
}

/// Uniform `tau` grid of `n >= 2` points including both ends.
pub fn uniform_tau(n: usize) -> Vec<f64> {
    (0..n).map(|i| if i + 1 == n { 1.0 } else { -1.0 + 2.0 * i as f64 / (n - 1) as f64 }).collect()
}

pub fn sample(sol: &CollocationSolution) -> SampledSolution {
    let tau = uniform_tau(SAMPLES);
    let (t0, tf) = (sol.t0, sol.tf);
    SampledSolution {
        t: tau.iter().map(|s| t0 + 0.5 * (s + 1.0) * (tf - t0)).collect(),
        states: tau.iter().map(|&s| sol.state_at(s)).collect(),
        controls: tau.iter().map(|&s| sol.control_at(s)).collect(),
        tau,
    }
}

fn trace(sol: &CollocationSolution, k: usize, traj: &Trajectory) -> Trace {
    let map = sol.mesh.interval(k);
    let interp = sol.state_interpolant(k);
    Trace {
        status: traj.status,
        failure_tau: traj.failure_location.map(|z| map.to_tau(z)),
        tau: traj.points.iter().map(|&z| map.to_tau(z)).collect(),
        simulated: traj.states.clone(),
        collocated: traj.points.iter().map(|&z| interp.eval(z)).collect(),
    }
}

/// Simulated-versus-collocated traces for every interval of the solution.
pub fn overlays(
    ocp: &OcpDefinition,
    sol: &CollocationSolution,
    spec: &IntegratorSpec,
    policy: DirectionPolicy,
) -> Result<Vec<Overlay>> {
    let sims = simulate_all(ocp, sol, spec, policy)?;
    Ok(sims
        .iter()
        .enumerate()
        .map(|(k, (f, b))| Overlay {
            interval: k,
            left: sol.mesh.points()[k],
            right: sol.mesh.points()[k + 1],
            forward: f.as_ref().map(|t| trace(sol, k, t)),
            backward: b.as_ref().map(|t| trace(sol, k, t)),
        })
        .collect())
}

pub fn build<'a>(config: &'a RunConfig, ocp: &OcpDefinition, result: &'a RunResult) -> Result<RunReport<'a>> {
    let last = result.history.last();
    let final_result = result.solution.as_ref().map(|sol| FinalSummary {
        objective: sol.objective,
        t0: sol.t0,
        tf: sol.tf,
        e_max: last.and_then(|r| r.e_max),
        residual_max: last.and_then(|r| r.residual_max),
        total_points: sol.mesh.total_points(),
        intervals: sol.mesh.num_intervals(),
        mesh_points: sol.mesh.points().to_vec(),
        counts: sol.mesh.counts().to_vec(),
    });
    let overlays = match &result.solution {
        Some(sol) => overlays(ocp, sol, &config.options().integrator, result.policy)?,
        None => Vec::new(),
    };
    Ok(RunReport {
        config,
        problem: ProblemSummary { name: ocp.name.clone(), states: ocp.n_x, controls: ocp.n_u },
        status: result.status,
        message: &result.message,
        direction_policy: result.policy,
        skipped: &result.skipped,
        iterations: &result.history,
        final_result,
        solution: result.solution.as_ref().map(sample),
        overlays,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// `history.csv`: one `iteration,tau` row per mesh point per iteration.
pub fn write_history_csv(path: &Path, history: &[IterationRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(["iteration", "tau"])?;
    for rec in history {
        for tau in &rec.mesh_points {
            w.write_record([rec.iteration.to_string(), tau.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_meshes_json(path: &Path, history: &[IterationRecord]) -> Result<()> {
    let snapshots: Vec<MeshSnapshot> = history
        .iter()
        .map(|r| MeshSnapshot { iteration: r.iteration, mesh_points: &r.mesh_points, counts: &r.counts })
        .collect();
    write_json(path, &snapshots)
}

/// Writes the files selected by `config.formats`; returns their paths.
pub fn emit(config: &RunConfig, ocp: &OcpDefinition, result: &RunResult) -> Result<Vec<PathBuf>> {
    let dir = &config.output_dir;
    let mut written = Vec::new();
    if config.formats.contains(&Format::Json) {
        let report = build(config, ocp, result)?;
        let path = dir.join("report.json");
        write_json(&path, &report)?;
        written.push(path);
        let path = dir.join("meshes.json");
        write_meshes_json(&path, &result.history)?;
        written.push(path);
    }
    if config.formats.contains(&Format::Csv) {
        let path = dir.join("history.csv");
        write_history_csv(&path, &result.history)?;
        written.push(path);
    }
    Ok(written)
}
