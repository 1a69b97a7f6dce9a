//! Bolza problem definitions, time-domain maps and meshes.

mod benchmarks;

pub use benchmarks::{hyper_sensitive, robot_arm, robot_arm_inertia, supersonic_climb, AeroModel, ROBOT_ARM_LENGTH};

use std::sync::Arc;

use crate::error::{Error, Result};

pub type DynamicsFn = dyn Fn(&[f64], &[f64], f64) -> Vec<f64> + Send + Sync;
pub type LagrangeFn = dyn Fn(&[f64], &[f64], f64) -> f64 + Send + Sync;
pub type MayerFn = dyn Fn(&[f64], f64, &[f64], f64) -> f64 + Send + Sync;
pub type BoundaryFn = dyn Fn(&[f64], f64, &[f64], f64) -> Vec<f64> + Send + Sync;
pub type PathFn = dyn Fn(&[f64], &[f64], f64) -> Vec<f64> + Send + Sync;

/// Initial or final time: fixed, or free within bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeSpec {
    Fixed(f64),
    Free { lower: f64, upper: f64, guess: Option<f64> },
}

impl TimeSpec {
    pub fn free(lower: f64, upper: f64) -> Self {
        TimeSpec::Free { lower, upper, guess: None }
    }

    pub fn is_free(&self) -> bool {
        matches!(self, TimeSpec::Free { .. })
    }

    pub fn guess(&self) -> f64 {
        match *self {
            TimeSpec::Fixed(v) => v,
            TimeSpec::Free { lower, upper, guess } => guess.unwrap_or(0.5 * (lower + upper)),
        }
    }

    pub fn bounds(&self) -> (f64, f64) {
        match *self {
            TimeSpec::Fixed(v) => (v, v),
            TimeSpec::Free { lower, upper, .. } => (lower, upper),
        }
    }
}

/// A Bolza optimal control problem posed on the unit horizon `tau in [-1, 1]`.
///
/// Callbacks receive the normalized time `tau`, not physical time. Boundary
/// conditions are the pinned initial/final state values followed by the rows
/// of the optional general boundary callback, each row carrying `[lower,
/// upper]` bounds (equal bounds make an equality).
#[derive(Clone)]
pub struct OcpDefinition {
    pub name: String,
    pub n_x: usize,
    pub n_u: usize,
    pub t0: TimeSpec,
    pub tf: TimeSpec,
    pub state_bounds: Vec<(f64, f64)>,
    pub control_bounds: Vec<(f64, f64)>,
    pub initial_state: Vec<Option<f64>>,
    pub final_state: Vec<Option<f64>>,
    dynamics: Arc<DynamicsFn>,
    lagrange: Option<Arc<LagrangeFn>>,
    mayer: Option<Arc<MayerFn>>,
    boundary: Option<Arc<BoundaryFn>>,
    boundary_bounds: Vec<(f64, f64)>,
    path: Option<Arc<PathFn>>,
    path_bounds: Vec<(f64, f64)>,
}

impl std::fmt::Debug for OcpDefinition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OcpDefinition")
            .field("name", &self.name)
            .field("n_x", &self.n_x)
            .field("n_u", &self.n_u)
            .field("t0", &self.t0)
            .field("tf", &self.tf)
            .finish_non_exhaustive()
    }
}

impl OcpDefinition {
    /// Starts a problem with the given dynamics; everything else defaults to
    /// unbounded, fixed `t0 = 0`, `tf` free in `[1e-3, 1e4]`.
    pub fn new<F>(name: impl Into<String>, n_x: usize, n_u: usize, dynamics: F) -> Self
    where
        F: Fn(&[f64], &[f64], f64) -> Vec<f64> + Send + Sync + 'static,
    {
        let inf = f64::INFINITY;
        Self {
            name: name.into(),
            n_x,
            n_u,
            t0: TimeSpec::Fixed(0.0),
            tf: TimeSpec::free(1e-3, 1e4),
            state_bounds: vec![(-inf, inf); n_x],
            control_bounds: vec![(-inf, inf); n_u],
            initial_state: vec![None; n_x],
            final_state: vec![None; n_x],
            dynamics: Arc::new(dynamics),
            lagrange: None,
            mayer: None,
            boundary: None,
            boundary_bounds: Vec::new(),
            path: None,
            path_bounds: Vec::new(),
        }
    }

    pub fn with_lagrange<F>(mut self, f: F) -> Self
    where
        F: Fn(&[f64], &[f64], f64) -> f64 + Send + Sync + 'static,
    {
        self.lagrange = Some(Arc::new(f));
        self
    }

    pub fn with_mayer<F>(mut self, f: F) -> Self
    where
        F: Fn(&[f64], f64, &[f64], f64) -> f64 + Send + Sync + 'static,
    {
        self.mayer = Some(Arc::new(f));
        self
    }

    /// General boundary rows `lower <= b(x0, t0, xf, tf) <= upper`.
    pub fn with_boundary<F>(mut self, bounds: Vec<(f64, f64)>, f: F) -> Self
    where
        F: Fn(&[f64], f64, &[f64], f64) -> Vec<f64> + Send + Sync + 'static,
    {
        self.boundary = Some(Arc::new(f));
        self.boundary_bounds = bounds;
        self
    }

    /// Path rows `lower <= c(x, u, tau) <= upper`, enforced at collocation points.
    pub fn with_path<F>(mut self, bounds: Vec<(f64, f64)>, f: F) -> Self
    where
        F: Fn(&[f64], &[f64], f64) -> Vec<f64> + Send + Sync + 'static,
    {
        self.path = Some(Arc::new(f));
        self.path_bounds = bounds;
        self
    }

    pub fn with_times(mut self, t0: TimeSpec, tf: TimeSpec) -> Self {
        self.t0 = t0;
        self.tf = tf;
        self
    }

    pub fn with_state_bounds(mut self, bounds: Vec<(f64, f64)>) -> Self {
        self.state_bounds = bounds;
        self
    }

    pub fn with_control_bounds(mut self, bounds: Vec<(f64, f64)>) -> Self {
        self.control_bounds = bounds;
        self
    }

    pub fn with_initial_state(mut self, values: Vec<Option<f64>>) -> Self {
        self.initial_state = values;
        self
    }

    pub fn with_final_state(mut self, values: Vec<Option<f64>>) -> Self {
        self.final_state = values;
        self
    }

    /// Number of path rows.
    pub fn n_path(&self) -> usize {
        self.path_bounds.len()
    }

    /// Number of boundary rows, pinned values included.
    pub fn n_boundary(&self) -> usize {
        self.pinned().count() + self.boundary_bounds.len()
    }

    fn pinned(&self) -> impl Iterator<Item = (bool, usize, f64)> + '_ {
        let first = self.initial_state.iter().enumerate().filter_map(|(i, v)| v.map(|v| (true, i, v)));
        let last = self.final_state.iter().enumerate().filter_map(|(i, v)| v.map(|v| (false, i, v)));
        first.chain(last)
    }

    pub fn has_lagrange(&self) -> bool {
        self.lagrange.is_some()
    }

    pub fn has_mayer(&self) -> bool {
        self.mayer.is_some()
    }

    pub fn dynamics(&self, x: &[f64], u: &[f64], tau: f64) -> Vec<f64> {
        (self.dynamics)(x, u, tau)
    }

    pub fn lagrange(&self, x: &[f64], u: &[f64], tau: f64) -> f64 {
        self.lagrange.as_ref().map_or(0.0, |f| f(x, u, tau))
    }

    pub fn mayer(&self, x0: &[f64], t0: f64, xf: &[f64], tf: f64) -> f64 {
        self.mayer.as_ref().map_or(0.0, |f| f(x0, t0, xf, tf))
    }

    pub fn path(&self, x: &[f64], u: &[f64], tau: f64) -> Vec<f64> {
        self.path.as_ref().map_or_else(Vec::new, |f| f(x, u, tau))
    }

    /// All boundary rows: pinned initial values, pinned final values, then
    /// the general callback.
    pub fn boundary(&self, x0: &[f64], t0: f64, xf: &[f64], tf: f64) -> Vec<f64> {
        let mut out: Vec<f64> = self.pinned().map(|(first, i, v)| if first { x0[i] - v } else { xf[i] - v }).collect();
        if let Some(f) = &self.boundary {
            out.extend(f(x0, t0, xf, tf));
        }
        out
    }

    pub fn boundary_bounds(&self) -> Vec<(f64, f64)> {
        let mut b = vec![(0.0, 0.0); self.pinned().count()];
        b.extend(self.boundary_bounds.iter().cloned());
        b
    }

    pub fn path_bounds(&self) -> &[(f64, f64)] {
        &self.path_bounds
    }

    /// Checks dimensions and bounds, probing every callback once at `(x, u)`.
    pub fn validate(&self, x: &[f64], u: &[f64]) -> Result<()> {
        let dims = [
            ("state_bounds", self.state_bounds.len(), self.n_x),
            ("control_bounds", self.control_bounds.len(), self.n_u),
            ("initial_state", self.initial_state.len(), self.n_x),
            ("final_state", self.final_state.len(), self.n_x),
        ];
        for (what, got, expected) in dims {
            if got != expected {
                return Err(Error::InvalidProblem(format!("{what} has length {got}, expected {expected}")));
            }
        }
        for (lo, hi) in self.state_bounds.iter().chain(&self.control_bounds) {
            if !(lo <= hi) {
                return Err(Error::InvalidProblem(format!("empty bound [{lo}, {hi}]")));
            }
        }
        let (t0, tf) = (self.t0.guess(), self.tf.guess());
        if !(tf > t0) {
            return Err(Error::InvalidInterval(format!("final time {tf} not after {t0}")));
        }
        let got = self.dynamics(x, u, 0.0).len();
        if got != self.n_x {
            return Err(Error::CallbackDimension { callback: "dynamics", expected: self.n_x, got });
        }
        if let Some(f) = &self.path {
            let got = f(x, u, 0.0).len();
            if got != self.path_bounds.len() {
                return Err(Error::CallbackDimension { callback: "path", expected: self.path_bounds.len(), got });
            }
        }
        if let Some(f) = &self.boundary {
            let got = f(x, t0, x, tf).len();
            if got != self.boundary_bounds.len() {
                return Err(Error::CallbackDimension {
                    callback: "boundary",
                    expected: self.boundary_bounds.len(),
                    got,
                });
            }
        }
        Ok(())
    }
}

/// Maps normalized time to physical time.
pub fn tau_to_t(tau: f64, t0: f64, tf: f64) -> Result<f64> {
    if !(tf > t0) {
        return Err(Error::InvalidInterval(format!("tf={tf} must exceed t0={t0}")));
    }
    Ok(0.5 * (tf - t0) * tau + 0.5 * (tf + t0))
}

/// Maps physical time to normalized time.
pub fn t_to_tau(t: f64, t0: f64, tf: f64) -> Result<f64> {
    if !(tf > t0) {
        return Err(Error::InvalidInterval(format!("tf={tf} must exceed t0={t0}")));
    }
    Ok((2.0 * t - tf - t0) / (tf - t0))
}

/// Affine map between an interval `[left, right]` of normalized time and the
/// reference interval `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalMap {
    pub left: f64,
    pub right: f64,
}

impl IntervalMap {
    pub fn new(left: f64, right: f64) -> Result<Self> {
        if !(right > left) {
            return Err(Error::InvalidInterval(format!("interval [{left}, {right}] is empty or reversed")));
        }
        Ok(Self { left, right })
    }

    /// Half width.
    pub fn scale(&self) -> f64 {
        0.5 * (self.right - self.left)
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.right + self.left)
    }

    pub fn to_tau(&self, zeta: f64) -> f64 {
        self.scale() * zeta + self.midpoint()
    }

    pub fn to_zeta(&self, tau: f64) -> f64 {
        (tau - self.midpoint()) / self.scale()
    }
}

/// Local coordinate of interval `[left, right]` mapped to normalized time.
pub fn zeta_to_tau(zeta: f64, left: f64, right: f64) -> Result<f64> {
    Ok(IntervalMap::new(left, right)?.to_tau(zeta))
}

/// Normalized time mapped to the local coordinate of `[left, right]`.
pub fn tau_to_zeta(tau: f64, left: f64, right: f64) -> Result<f64> {
    Ok(IntervalMap::new(left, right)?.to_zeta(tau))
}

/// For adjacent intervals `[a, b]` and `[b, c]`: maps a local coordinate of
/// the left interval to the local coordinate of the right one.
pub fn left_to_right(zeta: f64, a: f64, b: f64, c: f64) -> Result<f64> {
    let left = IntervalMap::new(a, b)?;
    let right = IntervalMap::new(b, c)?;
    Ok(right.to_zeta(left.to_tau(zeta)))
}

/// Inverse of [`left_to_right`].
pub fn right_to_left(zeta: f64, a: f64, b: f64, c: f64) -> Result<f64> {
    let left = IntervalMap::new(a, b)?;
    let right = IntervalMap::new(b, c)?;
    Ok(left.to_zeta(right.to_tau(zeta)))
}

/// Partition of `[-1, 1]` into intervals with a collocation count per interval.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Mesh {
    points: Vec<f64>,
    counts: Vec<usize>,
}

impl Mesh {
    pub fn new(points: Vec<f64>, counts: Vec<usize>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidMesh("need at least two mesh points".into()));
        }
        if counts.len() + 1 != points.len() {
            return Err(Error::InvalidMesh(format!(
                "{} mesh points but {} interval counts",
                points.len(),
                counts.len()
            )));
        }
        if points[0] != -1.0 || *points.last().unwrap() != 1.0 {
            return Err(Error::InvalidMesh("mesh must span [-1, 1]".into()));
        }
        if !points.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidMesh("mesh points must strictly increase".into()));
        }
        if counts.contains(&0) {
            return Err(Error::InvalidMesh("every interval needs a collocation point".into()));
        }
        Ok(Self { points, counts })
    }

    /// `intervals` equal intervals of `n` points each.
    pub fn uniform(intervals: usize, n: usize) -> Result<Self> {
        if intervals == 0 {
            return Err(Error::InvalidMesh("need at least one interval".into()));
        }
        let mut points: Vec<f64> = (0..=intervals).map(|i| -1.0 + 2.0 * i as f64 / intervals as f64).collect();
        points[intervals] = 1.0;
        Self::new(points, vec![n; intervals])
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn num_intervals(&self) -> usize {
        self.counts.len()
    }

    /// Total number of collocation points.
    pub fn total_points(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn count(&self, k: usize) -> usize {
        self.counts[k]
    }

    pub fn interval(&self, k: usize) -> IntervalMap {
        IntervalMap { left: self.points[k], right: self.points[k + 1] }
    }

    /// Index of the interval owning `tau`; interior mesh points belong to the
    /// interval on their right.
    pub fn locate(&self, tau: f64) -> usize {
        let k = self.points.partition_point(|&p| p <= tau);
        k.saturating_sub(1).min(self.counts.len() - 1)
    }
}
