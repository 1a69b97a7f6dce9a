//! Mesh refinement: p and h refinement of inaccurate intervals, merging and
//! p reduction of accurate ones, and the solve-estimate-refine loop.

use std::time::Instant;

use log::{debug, info, warn};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimate::{self, DirectionPolicy, ErrorReport};
use crate::nlp::{InteriorPoint, NlpSolver, SolveStatus, SolverOptions};
use crate::ode::{Direction, IntegratorSpec};
use crate::problem::{Mesh, OcpDefinition};
use crate::transcription::{self, CollocationNlp, CollocationSolution};

/// Guard so that exact powers of ten are not pushed across an integer by
/// rounding in `log10`.
const LOG_SLACK: f64 = 1e-10;

/// Substitute for a zero error in the reduction formula.
const ZERO_ERROR_FLOOR: f64 = 1e-16;

fn snapped_log10(x: f64) -> f64 {
    let l = x.log10();
    if (l - l.round()).abs() < LOG_SLACK {
        l.round()
    } else {
        l
    }
}

/// Number of collocation points to add to an interval with error
/// `e_max > tolerance`: `ceil(log10(e_max / tolerance))`.
pub fn p_refine_count(e_max: f64, tolerance: f64) -> Result<usize> {
    if !(e_max > tolerance) {
        return Err(Error::InvalidOption(format!(
            "p refinement needs an error above tolerance ({e_max} <= {tolerance})"
        )));
    }
    Ok((snapped_log10(e_max / tolerance).ceil() as usize).max(1))
}

/// Number of subintervals replacing an interval whose next count `n_next`
/// exceeds the cap.
pub fn h_refine_count(n_next: usize, n_min: usize) -> usize {
    n_next.div_ceil(n_min.max(1)).max(2)
}

/// Mesh points of the uniform split of `[left, right]`, endpoints included.
pub fn h_refine_split(n_next: usize, n_min: usize, left: f64, right: f64) -> Result<Vec<f64>> {
    if !(right > left) || !left.is_finite() || !right.is_finite() {
        return Err(Error::InvalidInterval(format!("cannot split [{left}, {right}]")));
    }
    let h = h_refine_count(n_next, n_min);
    let mut pts: Vec<f64> = (0..=h).map(|i| left + (right - left) * i as f64 / h as f64).collect();
    pts[h] = right;
    Ok(pts)
}

/// Number of collocation points to remove from an interval with
/// `e_max <= tolerance`.
pub fn p_reduce_count(e_max: f64, tolerance: f64, n_k: usize, n_min: usize, n_max: usize) -> Result<usize> {
    if e_max > tolerance || e_max < 0.0 || e_max.is_nan() {
        return Err(Error::InvalidOption(format!(
            "p reduction needs an error within tolerance ({e_max} > {tolerance})"
        )));
    }
    if n_k > n_max || n_min > n_max {
        return Err(Error::InvalidOption(format!("count {n_k} outside [{n_min}, {n_max}]")));
    }
    let e = if e_max == 0.0 { ZERO_ERROR_FLOOR } else { e_max };
    let delta = (n_min + n_max - n_k) as f64;
    let p = snapped_log10(tolerance / e) / delta;
    let p = if (p - p.round()).abs() < LOG_SLACK { p.round() } else { p.floor() };
    Ok(p.max(0.0) as usize)
}

/// Count after reduction, never below `n_min`.
pub fn reduced_count(n_k: usize, reduction: usize, n_min: usize) -> usize {
    n_k.saturating_sub(reduction).max(n_min)
}

/// Count of a merged interval.
pub fn merged_count(n_left: usize, n_right: usize) -> usize {
    n_left.max(n_right)
}

/// Greedy non-overlapping choice among mergeable pairs, in ascending order
/// of `max(e_k, e_{k+1}, merged error)`, ties to the lower index. Returns the
/// left indices of the chosen pairs in ascending order.
pub fn plan_merges(interval_errors: &[Option<f64>], merged: &[(usize, f64)], tolerance: f64) -> Vec<usize> {
    let mut candidates: Vec<(f64, usize)> = merged
        .iter()
        .filter(|(k, e)| {
            *e <= tolerance
                && k + 1 < interval_errors.len()
                && interval_errors[*k].is_some_and(|v| v <= tolerance)
                && interval_errors[k + 1].is_some_and(|v| v <= tolerance)
        })
        .map(|&(k, e)| {
            let score = e.max(interval_errors[k].unwrap()).max(interval_errors[k + 1].unwrap());
            (score, k)
        })
        .collect();
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut used = vec![false; interval_errors.len()];
    let mut chosen = Vec::new();
    for (_, k) in candidates {
        if !used[k] && !used[k + 1] {
            used[k] = true;
            used[k + 1] = true;
            chosen.push(k);
        }
    }
    chosen.sort_unstable();
    chosen
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", content = "amount", rename_all = "snake_case")]
pub enum Action {
    PRefine(usize),
    HRefine(usize),
    MergeWithNext,
    /// Right member of a merge.
    Merged,
    PReduce(usize),
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefinementPlan {
    pub actions: Vec<Action>,
    pub next_mesh: Mesh,
    pub merged_pairs: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefinementOptions {
    pub n_min: usize,
    pub n_max: usize,
    pub mesh_tolerance: f64,
    pub max_iterations: usize,
    pub integrator: IntegratorSpec,
    pub direction_policy: DirectionPolicy,
    #[serde(skip)]
    pub nlp: SolverOptions,
    /// Record wall-clock time per iteration (makes reports run-dependent).
    pub record_wall_time: bool,
}

impl Default for RefinementOptions {
    fn default() -> Self {
        Self {
            n_min: 3,
            n_max: 10,
            mesh_tolerance: 1e-6,
            max_iterations: 40,
            integrator: IntegratorSpec::default(),
            direction_policy: DirectionPolicy::Both,
            nlp: SolverOptions::default(),
            record_wall_time: false,
        }
    }
}

impl RefinementOptions {
    pub fn validate(&self) -> Result<()> {
        if self.n_min < 2 {
            return Err(Error::InvalidOption(format!("n_min must be at least 2, got {}", self.n_min)));
        }
        if self.n_max < self.n_min {
            return Err(Error::InvalidOption(format!(
                "n_max ({}) must not be below n_min ({})",
                self.n_max, self.n_min
            )));
        }
        if !(self.mesh_tolerance > 0.0 && self.mesh_tolerance.is_finite()) {
            return Err(Error::InvalidOption(format!("mesh tolerance must be positive, got {}", self.mesh_tolerance)));
        }
        self.integrator.validate()
    }

    /// Default starting mesh: ten equal intervals of `n_min` points.
    pub fn initial_mesh(&self) -> Mesh {
        Mesh::uniform(10, self.n_min).expect("ten intervals of at least two points")
    }
}

/// Builds the next mesh from the current one and its error estimate.
pub fn refine(
    mesh: &Mesh,
    report: &ErrorReport,
    merged: &[(usize, f64)],
    opts: &RefinementOptions,
) -> Result<RefinementPlan> {
    let eps = opts.mesh_tolerance;
    let errs: Vec<Option<f64>> = report.intervals.iter().map(|i| i.e_max).collect();
    if errs.len() != mesh.num_intervals() {
        return Err(Error::LengthMismatch { expected: mesh.num_intervals(), got: errs.len() });
    }
    if errs.iter().all(|e| e.is_some_and(|v| v <= eps)) {
        return Err(Error::InvalidOption("every interval already meets the tolerance".into()));
    }
    let merges = plan_merges(&errs, merged, eps);
    let pts = mesh.points();
    let mut actions = Vec::with_capacity(errs.len());
    let mut points = vec![pts[0]];
    let mut counts = Vec::new();
    let mut k = 0;
    while k < errs.len() {
        let n_k = mesh.count(k);
        match errs[k] {
            None => {
                // no estimate at all: halve the interval
                let split = h_refine_split(2, opts.n_min, pts[k], pts[k + 1])?;
                actions.push(Action::HRefine(split.len() - 1));
                counts.extend(std::iter::repeat_n(opts.n_min, split.len() - 1));
                points.extend(&split[1..]);
            }
            Some(e) if e > eps => {
                let p = p_refine_count(e, eps)?;
                let n_next = n_k + p;
                if n_next > opts.n_max {
                    let split = h_refine_split(n_next, opts.n_min, pts[k], pts[k + 1])?;
                    actions.push(Action::HRefine(split.len() - 1));
                    counts.extend(std::iter::repeat_n(opts.n_min, split.len() - 1));
                    points.extend(&split[1..]);
                } else {
                    actions.push(Action::PRefine(p));
                    counts.push(n_next);
                    points.push(pts[k + 1]);
                }
            }
            Some(e) => {
                if merges.binary_search(&k).is_ok() {
                    actions.push(Action::MergeWithNext);
                    actions.push(Action::Merged);
                    counts.push(merged_count(n_k, mesh.count(k + 1)).clamp(opts.n_min, opts.n_max));
                    points.push(pts[k + 2]);
                    k += 2;
                    continue;
                }
                let n_k = n_k.min(opts.n_max);
                let p = p_reduce_count(e, eps, n_k, opts.n_min, opts.n_max)?;
                let n_new = reduced_count(n_k, p, opts.n_min);
                actions.push(if n_new < n_k { Action::PReduce(n_k - n_new) } else { Action::None });
                counts.push(n_new);
                points.push(pts[k + 1]);
            }
        }
        k += 1;
    }
    let merged_pairs =
        merges.iter().map(|&k| (k, merged.iter().find(|m| m.0 == k).map_or(f64::NAN, |m| m.1))).collect();
    Ok(RefinementPlan { actions, next_mesh: Mesh::new(points, counts)?, merged_pairs })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Converged,
    MaxIterations,
    SolverFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedDirection {
    pub direction: Direction,
    pub reason: String,
    pub iteration: usize,
}

/// One pass of solve and estimate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub mesh_points: Vec<f64>,
    pub counts: Vec<usize>,
    pub total_points: usize,
    pub intervals: usize,
    pub e_max: Option<f64>,
    /// Per-interval errors; `None` where no simulation was usable.
    pub interval_errors: Vec<Option<f64>>,
    pub residual_max: Option<f64>,
    pub objective: f64,
    pub nlp_status: SolveStatus,
    pub nlp_iterations: usize,
    /// Left indices and merged errors of the pairs merged for the next mesh.
    pub merges: Vec<(usize, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub status: RunStatus,
    /// Last solution whose NLP solve succeeded.
    pub solution: Option<CollocationSolution>,
    pub mesh: Mesh,
    pub report: Option<ErrorReport>,
    pub history: Vec<IterationRecord>,
    pub skipped: Vec<SkippedDirection>,
    pub policy: DirectionPolicy,
    pub message: String,
}

impl RunResult {
    pub fn objective(&self) -> Option<f64> {
        self.solution.as_ref().map(|s| s.objective)
    }

    pub fn final_error(&self) -> Option<f64> {
        self.report.as_ref().map(|r| r.max_error())
    }
}

/// Rebuilds interval errors after a direction is dropped.
fn restrict(report: &mut ErrorReport, policy: DirectionPolicy) {
    report.policy = policy;
    for iv in &mut report.intervals {
        let mut best: Option<f64> = None;
        for (trace, failed, used) in [
            (&iv.forward, iv.forward_failed, policy.uses_forward()),
            (&iv.backward, iv.backward_failed, policy.uses_backward()),
        ] {
            if used && !failed && !trace.is_empty() {
                let e = trace.iter().map(|p| p.error).fold(0.0, f64::max);
                best = Some(best.map_or(e, |b: f64| b.max(e)));
            }
        }
        iv.e_max = best;
    }
}

/// Solves, estimates and refines until every interval meets the tolerance
/// or the iteration budget runs out.
pub fn run_adaptive(ocp: &OcpDefinition, initial_mesh: &Mesh, opts: &RefinementOptions) -> Result<RunResult> {
    opts.validate()?;
    let solver = InteriorPoint::new(opts.nlp.clone());
    let mut mesh = initial_mesh.clone();
    let mut previous: Option<CollocationSolution> = None;
    let mut policy = match opts.direction_policy {
        DirectionPolicy::Auto => DirectionPolicy::Both,
        p => p,
    };
    let mut history = Vec::new();
    let mut skipped = Vec::new();
    let mut last_report = None;

    for iteration in 0.. {
        let started = Instant::now();
        let nlp = CollocationNlp::new(ocp, &mesh)?;
        let guess = match &previous {
            Some(prev) => transcription::interpolated_guess(ocp, &mesh, prev),
            None => transcription::initial_guess(ocp, &mesh),
        };
        let outcome = solver.solve(&nlp, &guess);
        debug!("iteration {iteration}: {:?}", outcome.message);
        let mut record = IterationRecord {
            iteration,
            mesh_points: mesh.points().to_vec(),
            counts: mesh.counts().to_vec(),
            total_points: mesh.total_points(),
            intervals: mesh.num_intervals(),
            e_max: None,
            interval_errors: Vec::new(),
            residual_max: None,
            objective: outcome.objective,
            nlp_status: outcome.status,
            nlp_iterations: outcome.iterations,
            merges: Vec::new(),
            wall_time: None,
        };
        if outcome.status != SolveStatus::Optimal {
            warn!("iteration {iteration}: NLP {:?}: {}", outcome.status, outcome.message.as_deref().unwrap_or(""));
            if opts.record_wall_time {
                record.wall_time = Some(started.elapsed().as_secs_f64());
            }
            history.push(record);
            return Ok(RunResult {
                status: RunStatus::SolverFailure,
                solution: previous,
                mesh,
                report: last_report,
                history,
                skipped,
                policy,
                message: format!(
                    "NLP solve failed on iteration {iteration}: {}",
                    outcome.message.as_deref().unwrap_or("no detail")
                ),
            });
        }
        let sol = nlp.extract(&outcome.z)?;
        let mut report = estimate::estimate(ocp, &sol, &opts.integrator, policy)?;

        if iteration == 0 && opts.direction_policy == DirectionPolicy::Auto {
            let fwd_failed = report.any_forward_failed();
            let bwd_failed = report.any_backward_failed();
            let dropped = match (fwd_failed, bwd_failed) {
                (false, true) => Some((DirectionPolicy::ForwardOnly, Direction::Backward, "tvp_failed")),
                (true, false) => Some((DirectionPolicy::BackwardOnly, Direction::Forward, "ivp_failed")),
                _ => None,
            };
            if let Some((p, direction, reason)) = dropped {
                info!("dropping {direction:?} simulations: {reason}");
                policy = p;
                restrict(&mut report, p);
                skipped.push(SkippedDirection { direction, reason: reason.to_string(), iteration });
            }
        }

        let e_max = report.max_error();
        record.e_max = Some(e_max);
        record.interval_errors = report.intervals.iter().map(|i| i.e_max).collect();
        record.residual_max = Some(report.max_residual());
        info!(
            "iteration {iteration}: N={} K={} objective={:.9} e_max={e_max:.3e}",
            mesh.total_points(),
            mesh.num_intervals(),
            outcome.objective
        );

        let converged = e_max <= opts.mesh_tolerance;
        let exhausted = iteration >= opts.max_iterations;
        let mut next = None;
        if !converged && !exhausted {
            let eps = opts.mesh_tolerance;
            let ok = |k: usize| report.intervals[k].e_max.is_some_and(|e| e <= eps);
            let pairs: Vec<usize> =
                (0..mesh.num_intervals().saturating_sub(1)).filter(|&k| ok(k) && ok(k + 1)).collect();
            let merged = estimate::merged_errors(ocp, &sol, &pairs, &report.gamma, &opts.integrator, policy)?;
            let plan = refine(&mesh, &report, &merged, opts)?;
            record.merges = plan.merged_pairs;
            next = Some(plan.next_mesh);
        }
        if opts.record_wall_time {
            record.wall_time = Some(started.elapsed().as_secs_f64());
        }
        history.push(record);
        last_report = Some(report);
        previous = Some(sol);

        match next {
            Some(m) => mesh = m,
            None => {
                let status = if converged { RunStatus::Converged } else { RunStatus::MaxIterations };
                let message = if converged {
                    format!("converged after {} mesh iterations", iteration)
                } else {
                    format!("iteration budget of {} exhausted", opts.max_iterations)
                };
                return Ok(RunResult {
                    status,
                    solution: previous,
                    mesh,
                    report: last_report,
                    history,
                    skipped,
                    policy,
                    message,
                });
            }
        }
    }
    unreachable!("the refinement loop returns from inside")
}
