//! Adaptive explicit Runge-Kutta simulation of the collocated dynamics with
//! the interpolated control, forward and backward in time, on single
//! intervals and on adjacent pairs.

mod tableau;

use serde::{Deserialize, Serialize};

use crate::basis::Interpolant;
use crate::error::{Error, Result};
use crate::problem::OcpDefinition;
use crate::transcription::CollocationSolution;

pub use tableau::{Tableau, DP54, V98};

/// Embedded pair used for simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Dp54,
    V98,
}

impl Method {
    pub fn tableau(self) -> &'static Tableau {
        match self {
            Method::Dp54 => &DP54,
            Method::V98 => &V98,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorSpec {
    pub method: Method,
    pub tolerance: f64,
    pub max_steps: usize,
    /// Scale the error test by the solution norm rather than per component.
    pub norm_control: bool,
}

impl Default for IntegratorSpec {
    fn default() -> Self {
        Self { method: Method::Dp54, tolerance: 1e-6, max_steps: 100_000, norm_control: true }
    }
}

impl IntegratorSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(Error::InvalidOption(format!("integrator tolerance must be positive, got {}", self.tolerance)));
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidOption("integrator max_steps must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimStatus {
    Ok,
    Failed,
}

/// Simulated states at the propagation points, in integration order.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub points: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub direction: Direction,
    pub status: SimStatus,
    pub failure_location: Option<f64>,
    pub steps: usize,
}

impl Trajectory {
    pub fn is_ok(&self) -> bool {
        self.status == SimStatus::Ok
    }

    pub fn last_state(&self) -> &[f64] {
        self.states.last().expect("trajectory holds its initial point")
    }
}

/// Raw result of integrating `y' = f(s, y)` on an increasing range.
#[derive(Debug, Clone)]
pub struct Integration {
    pub points: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub failure: Option<f64>,
    pub steps: usize,
}

fn inf_norm(y: &[f64]) -> f64 {
    y.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// One step of `tab` from `(s, y)` with first stage `k0`; writes the
/// propagated state and the local error estimate.
#[allow(clippy::too_many_arguments)]
fn rk_step<F>(
    tab: &Tableau,
    f: &F,
    s: f64,
    y: &[f64],
    k0: &[f64],
    h: f64,
    k: &mut [Vec<f64>],
    ynew: &mut [f64],
    err: &mut [f64],
) where
    F: Fn(f64, &[f64]) -> Vec<f64>,
{
    let n = y.len();
    let mut ytmp = vec![0.0; n];
    k[0].copy_from_slice(k0);
    for i in 1..tab.stages() {
        for c in 0..n {
            let mut acc = y[c];
            for (j, aij) in tab.a[i].iter().enumerate() {
                if *aij != 0.0 {
                    acc += h * aij * k[j][c];
                }
            }
            ytmp[c] = acc;
        }
        k[i] = f(s + tab.c[i] * h, &ytmp);
    }
    for c in 0..n {
        let mut hi = 0.0;
        let mut e = 0.0;
        for i in 0..tab.stages() {
            hi += tab.b[i] * k[i][c];
            e += (tab.b[i] - tab.bh[i]) * k[i][c];
        }
        ynew[c] = y[c] + h * hi;
        err[c] = h * e;
    }
}

/// A single step of size `h`, returning the new state and the embedded
/// error estimate.
pub fn single_step<F>(method: Method, f: F, s: f64, y: &[f64], h: f64) -> (Vec<f64>, Vec<f64>)
where
    F: Fn(f64, &[f64]) -> Vec<f64>,
{
    let tab = method.tableau();
    let k0 = f(s, y);
    let mut k = vec![vec![0.0; y.len()]; tab.stages()];
    let mut ynew = vec![0.0; y.len()];
    let mut err = vec![0.0; y.len()];
    rk_step(tab, &f, s, y, &k0, h, &mut k, &mut ynew, &mut err);
    (ynew, err)
}

/// Integrates from `start` to `end > start`, recording every accepted step
/// and landing exactly on each of `outputs` (ascending, inside the range).
pub fn integrate<F>(f: F, start: f64, end: f64, y0: &[f64], outputs: &[f64], spec: &IntegratorSpec) -> Integration
where
    F: Fn(f64, &[f64]) -> Vec<f64>,
{
    let tab = spec.method.tableau();
    let n = y0.len();
    let span = end - start;
    let min_step = 1e-14 * span.abs().max(f64::MIN_POSITIVE);
    let blowup = 1e10 * (1.0 + inf_norm(y0));
    let mut out = Integration { points: vec![start], states: vec![y0.to_vec()], failure: None, steps: 0 };
    if span <= 0.0 {
        return out;
    }

    let mut targets: Vec<f64> = outputs.iter().copied().filter(|&s| s > start && s < end).collect();
    targets.push(end);
    let mut next_target = 0;

    let mut s = start;
    let mut y = y0.to_vec();
    let mut k0 = f(s, &y);
    if k0.iter().any(|v| !v.is_finite()) {
        out.failure = Some(s);
        return out;
    }
    let scale0 = inf_norm(&y).max(1.0);
    let d1 = inf_norm(&k0);
    let mut h = if d1 > 0.0 { (0.01 * scale0 / d1).min(span) } else { 0.1 * span };
    h = h.max(1e3 * min_step).min(span);
    let expo = 1.0 / (tab.embedded_order as f64 + 1.0);

    let mut k = vec![vec![0.0; n]; tab.stages()];
    let mut ynew = vec![0.0; n];
    let mut err = vec![0.0; n];
    while next_target < targets.len() {
        if out.steps >= spec.max_steps {
            out.failure = Some(s);
            return out;
        }
        let target = targets[next_target];
        let mut hit = false;
        let mut step = h;
        if s + step >= target || target - (s + step) < 1e-12 * span {
            step = target - s;
            hit = true;
        }

        rk_step(tab, &f, s, &y, &k0, step, &mut k, &mut ynew, &mut err);
        out.steps += 1;

        let finite = ynew.iter().all(|v| v.is_finite()) && err.iter().all(|v| v.is_finite());
        let ratio = if finite {
            let norm = inf_norm(&y).max(inf_norm(&ynew)).max(1.0);
            err.iter()
                .zip(y.iter().zip(&ynew))
                .map(|(e, (a, b))| {
                    let scale = if spec.norm_control { norm } else { a.abs().max(b.abs()).max(1.0) };
                    e.abs() / (spec.tolerance * scale)
                })
                .fold(0.0, f64::max)
        } else {
            f64::INFINITY
        };

        if ratio <= 1.0 {
            s = if hit { target } else { s + step };
            std::mem::swap(&mut y, &mut ynew);
            if inf_norm(&y) > blowup {
                out.failure = Some(s);
                return out;
            }
            k0 = f(s, &y);
            if k0.iter().any(|v| !v.is_finite()) {
                out.failure = Some(s);
                return out;
            }
            out.points.push(s);
            out.states.push(y.clone());
            if hit {
                next_target += 1;
            }
            let grow = if ratio == 0.0 { 5.0 } else { (0.9 * ratio.powf(-expo)).clamp(0.2, 5.0) };
            // a truncated step says nothing about the natural step length
            h = if hit { h.max(step * grow) } else { step * grow };
        } else {
            let shrink = if ratio.is_finite() { (0.9 * ratio.powf(-expo)).clamp(0.1, 0.9) } else { 0.1 };
            h = step * shrink;
        }
        if h < min_step {
            out.failure = Some(s);
            return out;
        }
    }
    out
}

/// Dynamics in the local coordinate of interval `k`, with control from
/// `control` (possibly extrapolated past the interval).
struct LocalField<'a> {
    ocp: &'a OcpDefinition,
    control: Interpolant,
    scale: f64,
    left: f64,
    right: f64,
}

impl LocalField<'_> {
    fn new<'a>(ocp: &'a OcpDefinition, sol: &CollocationSolution, k: usize) -> LocalField<'a> {
        let map = sol.mesh.interval(k);
        LocalField {
            ocp,
            control: sol.control_interpolant(k),
            scale: sol.time_scale() * map.scale(),
            left: map.left,
            right: map.right,
        }
    }

    fn tau(&self, zeta: f64) -> f64 {
        0.5 * (self.right - self.left) * zeta + 0.5 * (self.right + self.left)
    }

    fn eval(&self, zeta: f64, x: &[f64]) -> Vec<f64> {
        let u = self.control.eval(zeta);
        let mut d = self.ocp.dynamics(x, &u, self.tau(zeta));
        d.iter_mut().for_each(|v| *v *= self.scale);
        d
    }
}

/// Forward integration of `field` from `start` to `end` in local
/// coordinates, landing on `outputs`.
fn run_forward(
    field: &LocalField,
    x0: &[f64],
    start: f64,
    end: f64,
    outputs: &[f64],
    spec: &IntegratorSpec,
) -> Trajectory {
    let res = integrate(|s, y| field.eval(s, y), start, end, x0, outputs, spec);
    Trajectory {
        status: if res.failure.is_some() { SimStatus::Failed } else { SimStatus::Ok },
        failure_location: res.failure,
        points: res.points,
        states: res.states,
        direction: Direction::Forward,
        steps: res.steps,
    }
}

/// Backward integration from `start` down to `end < start`, carried out
/// forward in the reversed variable `-zeta`.
fn run_backward(
    field: &LocalField,
    x0: &[f64],
    start: f64,
    end: f64,
    outputs: &[f64],
    spec: &IntegratorSpec,
) -> Trajectory {
    let mut reversed: Vec<f64> = outputs.iter().map(|v| -v).collect();
    reversed.sort_by(f64::total_cmp);
    let res = integrate(
        |s, y| {
            let mut d = field.eval(-s, y);
            d.iter_mut().for_each(|v| *v = -*v);
            d
        },
        -start,
        -end,
        x0,
        &reversed,
        spec,
    );
    Trajectory {
        status: if res.failure.is_some() { SimStatus::Failed } else { SimStatus::Ok },
        failure_location: res.failure.map(|s| -s),
        points: res.points.iter().map(|s| -s).collect(),
        states: res.states,
        direction: Direction::Backward,
        steps: res.steps,
    }
}

fn check_interval(sol: &CollocationSolution, k: usize) -> Result<()> {
    if k >= sol.mesh.num_intervals() {
        return Err(Error::InvalidInterval(format!(
            "interval {k} out of range for {} intervals",
            sol.mesh.num_intervals()
        )));
    }
    Ok(())
}

/// Control polynomial of interval `k` through its collocation points only.
pub fn control_interpolant(sol: &CollocationSolution, k: usize) -> Result<Interpolant> {
    check_interval(sol, k)?;
    Ok(sol.control_interpolant(k))
}

/// Forward simulation of interval `k` from its initial collocated state.
pub fn simulate_ivp(
    ocp: &OcpDefinition,
    sol: &CollocationSolution,
    k: usize,
    spec: &IntegratorSpec,
) -> Result<Trajectory> {
    check_interval(sol, k)?;
    let field = LocalField::new(ocp, sol, k);
    Ok(run_forward(&field, &sol.states[k][0], -1.0, 1.0, sol.grid(k).points(), spec))
}

/// Backward simulation of interval `k` from its terminal collocated state.
pub fn simulate_tvp(
    ocp: &OcpDefinition,
    sol: &CollocationSolution,
    k: usize,
    spec: &IntegratorSpec,
) -> Result<Trajectory> {
    check_interval(sol, k)?;
    let field = LocalField::new(ocp, sol, k);
    let xf = sol.states[k].last().expect("interval has a terminal point");
    Ok(run_backward(&field, xf, 1.0, -1.0, sol.grid(k).points(), spec))
}

/// Position of interval `to`'s local coordinate `zeta` in interval `from`'s
/// local coordinate.
pub fn transfer(sol: &CollocationSolution, zeta: f64, to: usize, from: usize) -> f64 {
    sol.mesh.interval(from).to_zeta(sol.mesh.interval(to).to_tau(zeta))
}

/// Forward simulation across intervals `k` and `k + 1` using interval `k`'s
/// scaling and extrapolated control. Points are in interval `k`'s coordinate.
pub fn simulate_merged_ivp(
    ocp: &OcpDefinition,
    sol: &CollocationSolution,
    k: usize,
    spec: &IntegratorSpec,
) -> Result<Trajectory> {
    check_interval(sol, k + 1)?;
    let field = LocalField::new(ocp, sol, k);
    let end = transfer(sol, 1.0, k + 1, k);
    let mut outputs: Vec<f64> = sol.grid(k).points().to_vec();
    outputs.push(1.0);
    outputs.extend(sol.grid(k + 1).points().iter().map(|&z| transfer(sol, z, k + 1, k)));
    Ok(run_forward(&field, &sol.states[k][0], -1.0, end, &outputs, spec))
}

/// Backward simulation across intervals `k - 1` and `k` using interval `k`'s
/// scaling and extrapolated control. Points are in interval `k`'s coordinate.
pub fn simulate_merged_tvp(
    ocp: &OcpDefinition,
    sol: &CollocationSolution,
    k: usize,
    spec: &IntegratorSpec,
) -> Result<Trajectory> {
    check_interval(sol, k)?;
    if k == 0 {
        return Err(Error::InvalidInterval("merged backward simulation needs a left neighbour".into()));
    }
    let field = LocalField::new(ocp, sol, k);
    let end = transfer(sol, -1.0, k - 1, k);
    let mut outputs: Vec<f64> = sol.grid(k).points().to_vec();
    outputs.extend(sol.grid(k - 1).points().iter().map(|&z| transfer(sol, z, k - 1, k)));
    let xf = sol.states[k].last().expect("interval has a terminal point");
    Ok(run_backward(&field, xf, 1.0, end, &outputs, spec))
}
