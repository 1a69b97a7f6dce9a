//! Relative error of the collocated state against explicit simulations, per
//! interval and for adjacent pairs considered for merging.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{shared_grid, Interpolant};
use crate::error::{Error, Result};
use crate::ode::{self, IntegratorSpec, Trajectory};
use crate::problem::OcpDefinition;
use crate::transcription::CollocationSolution;

/// Which simulation directions feed the estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionPolicy {
    Both,
    ForwardOnly,
    BackwardOnly,
    /// Both, dropping a direction for the rest of the run when it fails on
    /// the first iteration.
    Auto,
}

impl DirectionPolicy {
    pub fn uses_forward(self) -> bool {
        !matches!(self, DirectionPolicy::BackwardOnly)
    }

    pub fn uses_backward(self) -> bool {
        !matches!(self, DirectionPolicy::ForwardOnly)
    }
}

/// Worst scaled discrepancy at one propagation point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PointError {
    pub point: f64,
    pub component: usize,
    pub error: f64,
}

/// Estimate for one interval.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntervalEstimate {
    /// `None` when no usable simulation exists.
    pub e_max: Option<f64>,
    pub forward: Vec<PointError>,
    pub backward: Vec<PointError>,
    pub forward_failed: bool,
    pub backward_failed: bool,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorReport {
    pub gamma: Vec<f64>,
    pub intervals: Vec<IntervalEstimate>,
    pub policy: DirectionPolicy,
}

impl ErrorReport {
    /// Largest interval error; infinite if some interval has no estimate.
    pub fn max_error(&self) -> f64 {
        self.intervals.iter().map(|i| i.e_max.unwrap_or(f64::INFINITY)).fold(0.0, f64::max)
    }

    pub fn max_residual(&self) -> f64 {
        self.intervals.iter().map(|i| i.residual).fold(0.0, f64::max)
    }

    pub fn any_forward_failed(&self) -> bool {
        self.intervals.iter().any(|i| i.forward_failed)
    }

    pub fn any_backward_failed(&self) -> bool {
        self.intervals.iter().any(|i| i.backward_failed)
    }
}

/// `gamma_i = 1 / (1 + max |X_i|)` over every stored state.
pub fn scaling_factors(sol: &CollocationSolution) -> Result<Vec<f64>> {
    let n = sol.initial_state().len();
    let mut peak = vec![0.0f64; n];
    for x in sol.nodal_states() {
        for (p, v) in peak.iter_mut().zip(x) {
            if !v.is_finite() {
                return Err(Error::Estimation("non-finite collocated state".into()));
            }
            *p = p.max(v.abs());
        }
    }
    Ok(peak.into_iter().map(|p| 1.0 / (1.0 + p)).collect())
}

fn worst(a: &[f64], b: &[f64], gamma: &[f64]) -> (usize, f64) {
    a.iter().zip(b).zip(gamma).map(|((a, b), g)| g * (a - b).abs()).enumerate().fold((0, 0.0), |best, (i, e)| {
        if e > best.1 || e.is_nan() {
            (i, e)
        } else {
            best
        }
    })
}

/// Pointwise errors of a trajectory against `reference(point)`.
pub fn trace<F>(traj: &Trajectory, gamma: &[f64], mut reference: F) -> Vec<PointError>
where
    F: FnMut(f64) -> Vec<f64>,
{
    traj.points
        .iter()
        .zip(&traj.states)
        .map(|(&p, x)| {
            let (component, error) = worst(x, &reference(p), gamma);
            PointError { point: p, component, error }
        })
        .collect()
}

fn trace_max(t: &[PointError]) -> f64 {
    t.iter().map(|p| if p.error.is_nan() { f64::INFINITY } else { p.error }).fold(0.0, f64::max)
}

/// Max over components, points and usable directions. Failed directions and
/// directions excluded by `policy` contribute nothing.
pub fn interval_error(
    sol: &CollocationSolution,
    k: usize,
    fwd: Option<&Trajectory>,
    bwd: Option<&Trajectory>,
    gamma: &[f64],
    policy: DirectionPolicy,
) -> Result<f64> {
    let interp = sol.state_interpolant(k);
    let mut best: Option<f64> = None;
    for (traj, allowed) in [(fwd, policy.uses_forward()), (bwd, policy.uses_backward())] {
        if let Some(t) = traj.filter(|t| allowed && t.is_ok()) {
            let e = trace_max(&trace(t, gamma, |z| interp.eval(z)));
            best = Some(best.map_or(e, |b: f64| b.max(e)));
        }
    }
    best.ok_or_else(|| Error::Estimation(format!("no usable simulation for interval {k}")))
}

/// Reference for a point in interval `k`'s extended coordinate: its own
/// interpolant inside `[-1, 1]`, the neighbour's beyond.
fn pair_reference(
    sol: &CollocationSolution,
    own: usize,
    other: usize,
    own_interp: &Interpolant,
    other_interp: &Interpolant,
    zeta: f64,
) -> Vec<f64> {
    if (-1.0..=1.0).contains(&zeta) {
        own_interp.eval(zeta)
    } else {
        other_interp.eval(ode::transfer(sol, zeta, own, other))
    }
}

/// Error of simulating intervals `k` and `k + 1` as one, forward with
/// interval `k`'s control and backward with interval `k + 1`'s. A failed
/// simulation in a used direction yields infinity (unmergeable).
pub fn merged_pair_error(
    sol: &CollocationSolution,
    k: usize,
    fwd: Option<&Trajectory>,
    bwd: Option<&Trajectory>,
    gamma: &[f64],
    policy: DirectionPolicy,
) -> f64 {
    let left = sol.state_interpolant(k);
    let right = sol.state_interpolant(k + 1);
    let mut e = 0.0f64;
    let mut used = false;
    if policy.uses_forward() {
        match fwd {
            Some(t) if t.is_ok() => {
                e = e.max(trace_max(&trace(t, gamma, |z| pair_reference(sol, k, k + 1, &left, &right, z))));
                used = true;
            }
            Some(_) => return f64::INFINITY,
            None => {}
        }
    }
    if policy.uses_backward() {
        match bwd {
            Some(t) if t.is_ok() => {
                e = e.max(trace_max(&trace(t, gamma, |z| pair_reference(sol, k + 1, k, &right, &left, z))));
                used = true;
            }
            Some(_) => return f64::INFINITY,
            None => {}
        }
    }
    if used {
        e
    } else {
        f64::INFINITY
    }
}

/// Integrated-residual diagnostic: the dynamics along the state polynomial
/// are sampled on an LGR grid one point denser than the interval's,
/// integrated from the interval start, and compared with the polynomial.
pub fn residual_error(ocp: &OcpDefinition, sol: &CollocationSolution, k: usize, gamma: &[f64]) -> Result<f64> {
    let n = sol.mesh.count(k) + 1;
    let grid = shared_grid(n)?;
    let map = sol.mesh.interval(k);
    let scale = sol.time_scale() * map.scale();
    let states = sol.state_interpolant(k);
    let controls = sol.control_interpolant(k);
    let rates: Vec<Vec<f64>> = grid
        .points()
        .iter()
        .map(|&z| {
            let mut f = ocp.dynamics(&states.eval(z), &controls.eval(z), map.to_tau(z));
            f.iter_mut().for_each(|v| *v *= scale);
            f
        })
        .collect();
    let rate_poly = Interpolant::new(grid.points().to_vec(), rates)?;
    let uppers = &grid.support()[1..];
    let weights = rate_poly.integration_matrix(uppers);
    let x0 = &sol.states[k][0];
    let mut worst_err = 0.0f64;
    for (row, &z) in weights.iter().zip(uppers) {
        let mut integrated = x0.clone();
        for (w, f) in row.iter().zip(rate_poly.values()) {
            for (acc, v) in integrated.iter_mut().zip(f) {
                *acc += w * v;
            }
        }
        let (_, e) = worst(&integrated, &states.eval(z), gamma);
        worst_err = worst_err.max(if e.is_nan() { f64::INFINITY } else { e });
    }
    Ok(worst_err)
}

/// Simulations of every interval in the directions `policy` asks for.
pub fn simulate_all(
    ocp: &OcpDefinition,
    sol: &CollocationSolution,
    spec: &IntegratorSpec,
    policy: DirectionPolicy,
) -> Result<Vec<(Option<Trajectory>, Option<Trajectory>)>> {
    (0..sol.mesh.num_intervals())
        .into_par_iter()
        .map(|k| {
            let f = policy.uses_forward().then(|| ode::simulate_ivp(ocp, sol, k, spec)).transpose()?;
            let b = policy.uses_backward().then(|| ode::simulate_tvp(ocp, sol, k, spec)).transpose()?;
            Ok((f, b))
        })
        .collect()
}

/// Simulates every interval and assembles the report.
pub fn estimate(
    ocp: &OcpDefinition,
    sol: &CollocationSolution,
    spec: &IntegratorSpec,
    policy: DirectionPolicy,
) -> Result<ErrorReport> {
    let gamma = scaling_factors(sol)?;
    let sims = simulate_all(ocp, sol, spec, policy)?;
    let intervals = sims
        .par_iter()
        .enumerate()
        .map(|(k, (f, b))| {
            let interp = sol.state_interpolant(k);
            let usable =
                |t: &Option<Trajectory>| t.as_ref().filter(|t| t.is_ok()).map(|t| trace(t, &gamma, |z| interp.eval(z)));
            let forward = usable(f).unwrap_or_default();
            let backward = usable(b).unwrap_or_default();
            let e_max = interval_error(sol, k, f.as_ref(), b.as_ref(), &gamma, policy).ok();
            Ok(IntervalEstimate {
                e_max,
                forward,
                backward,
                forward_failed: f.as_ref().is_some_and(|t| !t.is_ok()),
                backward_failed: b.as_ref().is_some_and(|t| !t.is_ok()),
                residual: residual_error(ocp, sol, k, &gamma)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ErrorReport { gamma, intervals, policy })
}

/// Merged-pair errors for the given left indices.
pub fn merged_errors(
    ocp: &OcpDefinition,
    sol: &CollocationSolution,
    pairs: &[usize],
    gamma: &[f64],
    spec: &IntegratorSpec,
    policy: DirectionPolicy,
) -> Result<Vec<(usize, f64)>> {
    pairs
        .par_iter()
        .map(|&k| {
            let f = policy.uses_forward().then(|| ode::simulate_merged_ivp(ocp, sol, k, spec)).transpose()?;
            let b = policy.uses_backward().then(|| ode::simulate_merged_tvp(ocp, sol, k + 1, spec)).transpose()?;
            Ok((k, merged_pair_error(sol, k, f.as_ref(), b.as_ref(), gamma, policy)))
        })
        .collect()
}
