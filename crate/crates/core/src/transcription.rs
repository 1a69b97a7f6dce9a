//! Transcription of an [`OcpDefinition`] on a [`Mesh`] into an NLP, and the
//! maps between decision vectors and per-interval solutions.

use std::collections::HashMap;
use std::sync::Arc;

use crate::basis::{shared_grid, CollocationGrid, Interpolant};
use crate::error::{Error, Result};
use crate::nlp::NlpProblem;
use crate::problem::{IntervalMap, Mesh, OcpDefinition, TimeSpec};

/// Where every unknown lives in the decision vector.
///
/// Points are numbered globally in time order; the terminal point of an
/// interval is the initial point of the next. Each collocation point stores
/// its state followed by its control; the final point stores only a state;
/// free `t0` and `tf` come last.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionLayout {
    pub n_x: usize,
    pub n_u: usize,
    interval_start: Vec<usize>,
    collocation_points: usize,
    pub t0_index: Option<usize>,
    pub tf_index: Option<usize>,
    pub dim: usize,
}

impl DecisionLayout {
    pub fn new(ocp: &OcpDefinition, mesh: &Mesh) -> Self {
        let mut interval_start = Vec::with_capacity(mesh.num_intervals());
        let mut p = 0;
        for &n in mesh.counts() {
            interval_start.push(p);
            p += n;
        }
        let mut dim = p * (ocp.n_x + ocp.n_u) + ocp.n_x;
        let t0_index = ocp.t0.is_free().then(|| {
            dim += 1;
            dim - 1
        });
        let tf_index = ocp.tf.is_free().then(|| {
            dim += 1;
            dim - 1
        });
        Self { n_x: ocp.n_x, n_u: ocp.n_u, interval_start, collocation_points: p, t0_index, tf_index, dim }
    }

    /// Number of collocation points over all intervals.
    pub fn collocation_points(&self) -> usize {
        self.collocation_points
    }

    /// Global index of point `j` (0..=N_k) of interval `k`.
    pub fn point(&self, k: usize, j: usize) -> usize {
        self.interval_start[k] + j
    }

    /// Offset of the state block of global point `p`.
    pub fn state_offset(&self, p: usize) -> usize {
        p * (self.n_x + self.n_u)
    }

    /// Offset of the control block of collocation point `p`.
    pub fn control_offset(&self, p: usize) -> usize {
        p * (self.n_x + self.n_u) + self.n_x
    }

    fn times(&self, z: &[f64], t0: &TimeSpec, tf: &TimeSpec) -> (f64, f64) {
        let pick = |idx: Option<usize>, spec: &TimeSpec| idx.map_or_else(|| spec.guess(), |i| z[i]);
        (pick(self.t0_index, t0), pick(self.tf_index, tf))
    }

    /// Splits a decision vector into per-interval state and control blocks.
    pub fn unpack(&self, ocp: &OcpDefinition, mesh: &Mesh, z: &[f64]) -> Result<CollocationSolution> {
        if z.len() != self.dim {
            return Err(Error::LengthMismatch { expected: self.dim, got: z.len() });
        }
        let (nx, nu) = (self.n_x, self.n_u);
        let mut states = Vec::with_capacity(mesh.num_intervals());
        let mut controls = Vec::with_capacity(mesh.num_intervals());
        let mut grids = Vec::with_capacity(mesh.num_intervals());
        for k in 0..mesh.num_intervals() {
            let n = mesh.count(k);
            states.push(
                (0..=n)
                    .map(|j| {
                        let o = self.state_offset(self.point(k, j));
                        z[o..o + nx].to_vec()
                    })
                    .collect(),
            );
            controls.push(
                (0..n)
                    .map(|i| {
                        let o = self.control_offset(self.point(k, i));
                        z[o..o + nu].to_vec()
                    })
                    .collect(),
            );
            grids.push(shared_grid(n)?);
        }
        let (t0, tf) = self.times(z, &ocp.t0, &ocp.tf);
        Ok(CollocationSolution { mesh: mesh.clone(), states, controls, t0, tf, objective: f64::NAN, grids })
    }

    /// Inverse of [`DecisionLayout::unpack`].
    pub fn pack(&self, sol: &CollocationSolution) -> Vec<f64> {
        let mut z = vec![0.0; self.dim];
        let (nx, nu) = (self.n_x, self.n_u);
        for k in 0..sol.mesh.num_intervals() {
            for (j, x) in sol.states[k].iter().enumerate() {
                let o = self.state_offset(self.point(k, j));
                z[o..o + nx].copy_from_slice(x);
            }
            for (i, u) in sol.controls[k].iter().enumerate() {
                let o = self.control_offset(self.point(k, i));
                z[o..o + nu].copy_from_slice(u);
            }
        }
        if let Some(i) = self.t0_index {
            z[i] = sol.t0;
        }
        if let Some(i) = self.tf_index {
            z[i] = sol.tf;
        }
        z
    }
}

/// Collocated states and controls, interval by interval.
#[derive(Debug, Clone)]
pub struct CollocationSolution {
    pub mesh: Mesh,
    /// `states[k][j]`: state at support node `j` (0..=N_k) of interval `k`.
    pub states: Vec<Vec<Vec<f64>>>,
    /// `controls[k][i]`: control at collocation point `i` of interval `k`.
    pub controls: Vec<Vec<Vec<f64>>>,
    pub t0: f64,
    pub tf: f64,
    pub objective: f64,
    grids: Vec<Arc<CollocationGrid>>,
}

impl CollocationSolution {
    pub fn grid(&self, k: usize) -> &CollocationGrid {
        &self.grids[k]
    }

    /// Half the time horizon.
    pub fn time_scale(&self) -> f64 {
        0.5 * (self.tf - self.t0)
    }

    /// Degree-N_k state polynomial of interval `k` in its local coordinate.
    pub fn state_interpolant(&self, k: usize) -> Interpolant {
        self.grids[k].state_interpolant(self.states[k].clone()).expect("state block matches its grid")
    }

    /// Degree-(N_k - 1) control polynomial through the collocation points.
    pub fn control_interpolant(&self, k: usize) -> Interpolant {
        self.grids[k].point_interpolant(self.controls[k].clone()).expect("control block matches its grid")
    }

    /// State at normalized time `tau`.
    pub fn state_at(&self, tau: f64) -> Vec<f64> {
        let k = self.mesh.locate(tau);
        self.state_interpolant(k).eval(self.mesh.interval(k).to_zeta(tau))
    }

    /// Control at normalized time `tau`.
    pub fn control_at(&self, tau: f64) -> Vec<f64> {
        let k = self.mesh.locate(tau);
        self.control_interpolant(k).eval(self.mesh.interval(k).to_zeta(tau))
    }

    /// Every stored state vector, shared points included once per interval.
    pub fn nodal_states(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.states.iter().flatten()
    }

    pub fn initial_state(&self) -> &[f64] {
        &self.states[0][0]
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().and_then(|s| s.last()).expect("non-empty mesh")
    }
}

#[derive(Debug, Clone, Copy)]
struct PointInfo {
    interval: usize,
    local: usize,
    tau: f64,
    scale: f64,
    weight: f64,
}

/// The NLP obtained by collocating a problem on a mesh.
pub struct CollocationNlp {
    ocp: OcpDefinition,
    mesh: Mesh,
    grids: Vec<Arc<CollocationGrid>>,
    layout: DecisionLayout,
    points: Vec<PointInfo>,
    n_path: usize,
    n_boundary: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
    row_lower: Vec<f64>,
    row_upper: Vec<f64>,
    jac_pattern: Vec<(usize, usize)>,
    hess_pattern: Vec<(usize, usize)>,
    point_slots: Vec<Vec<usize>>,
    boundary_slots: Vec<usize>,
}

const HESSIAN_STEP: f64 = 1.2e-4;
const GRADIENT_STEP: f64 = 6.0e-6;

/// Builds the NLP and its decision layout.
pub fn assemble(ocp: &OcpDefinition, mesh: &Mesh) -> Result<(CollocationNlp, DecisionLayout)> {
    let nlp = CollocationNlp::new(ocp, mesh)?;
    let layout = nlp.layout.clone();
    Ok((nlp, layout))
}

impl CollocationNlp {
    pub fn new(ocp: &OcpDefinition, mesh: &Mesh) -> Result<Self> {
        let guess_x: Vec<f64> = ocp.state_bounds.iter().map(|&(lo, hi)| midpoint_or_zero(lo, hi)).collect();
        let guess_u: Vec<f64> = ocp.control_bounds.iter().map(|&(lo, hi)| 0.0f64.clamp(lo, hi)).collect();
        if guess_x.len() != ocp.n_x || guess_u.len() != ocp.n_u {
            return Err(Error::InvalidProblem("bound vectors do not match dimensions".into()));
        }
        ocp.validate(&guess_x, &guess_u)?;
        let layout = DecisionLayout::new(ocp, mesh);
        let (nx, nu) = (ocp.n_x, ocp.n_u);
        let n_path = ocp.n_path();
        let n_boundary = ocp.n_boundary();
        let ntot = layout.collocation_points();

        let mut grids = Vec::new();
        let mut points = Vec::with_capacity(ntot);
        for k in 0..mesh.num_intervals() {
            let g = shared_grid(mesh.count(k))?;
            let map = mesh.interval(k);
            for (i, (&zeta, &w)) in g.points().iter().zip(g.weights()).enumerate() {
                points.push(PointInfo { interval: k, local: i, tau: map.to_tau(zeta), scale: map.scale(), weight: w });
            }
            grids.push(g);
        }

        let mut lower = vec![f64::NEG_INFINITY; layout.dim];
        let mut upper = vec![f64::INFINITY; layout.dim];
        for p in 0..=ntot {
            let o = layout.state_offset(p);
            for (i, &(lo, hi)) in ocp.state_bounds.iter().enumerate() {
                lower[o + i] = lo;
                upper[o + i] = hi;
            }
            if p < ntot {
                let o = layout.control_offset(p);
                for (i, &(lo, hi)) in ocp.control_bounds.iter().enumerate() {
                    lower[o + i] = lo;
                    upper[o + i] = hi;
                }
            }
        }
        for (idx, spec) in [(layout.t0_index, &ocp.t0), (layout.tf_index, &ocp.tf)] {
            if let Some(i) = idx {
                let (lo, hi) = spec.bounds();
                lower[i] = lo;
                upper[i] = hi;
            }
        }

        let mut row_lower = vec![0.0; ntot * nx];
        let mut row_upper = vec![0.0; ntot * nx];
        for _ in 0..ntot {
            for &(lo, hi) in ocp.path_bounds() {
                row_lower.push(lo);
                row_upper.push(hi);
            }
        }
        for (lo, hi) in ocp.boundary_bounds() {
            row_lower.push(lo);
            row_upper.push(hi);
        }

        let times: Vec<usize> = layout.t0_index.into_iter().chain(layout.tf_index).collect();
        let mut jac_pattern = Vec::new();
        for (p, info) in points.iter().enumerate() {
            let k = info.interval;
            let xo = layout.state_offset(p);
            let uo = layout.control_offset(p);
            for r in 0..nx {
                let row = p * nx + r;
                let mut cols: Vec<usize> =
                    (0..=mesh.count(k)).map(|j| layout.state_offset(layout.point(k, j)) + r).collect();
                cols.extend((0..nx).map(|i| xo + i));
                cols.extend((0..nu).map(|i| uo + i));
                cols.extend(&times);
                cols.sort_unstable();
                cols.dedup();
                jac_pattern.extend(cols.into_iter().map(|c| (row, c)));
            }
            for q in 0..n_path {
                let row = ntot * nx + p * n_path + q;
                jac_pattern.extend((0..nx).map(|i| (row, xo + i)));
                jac_pattern.extend((0..nu).map(|i| (row, uo + i)));
            }
        }
        let boundary_vars = boundary_variables(&layout, ntot);
        for r in 0..n_boundary {
            let row = ntot * (nx + n_path) + r;
            jac_pattern.extend(boundary_vars.iter().map(|&c| (row, c)));
        }

        let mut slot_of: HashMap<(usize, usize), usize> = HashMap::new();
        let mut hess_pattern = Vec::new();
        let mut slots_for = |vars: &[usize]| -> Vec<usize> {
            let mut slots = Vec::new();
            for a in 0..vars.len() {
                for b in 0..=a {
                    let key = (vars[a].max(vars[b]), vars[a].min(vars[b]));
                    let next = hess_pattern.len();
                    let s = *slot_of.entry(key).or_insert_with(|| {
                        hess_pattern.push(key);
                        next
                    });
                    slots.push(s);
                }
            }
            slots
        };
        let point_slots: Vec<Vec<usize>> = (0..ntot).map(|p| slots_for(&point_variables(&layout, p))).collect();
        let boundary_slots = slots_for(&boundary_vars);

        Ok(Self {
            ocp: ocp.clone(),
            mesh: mesh.clone(),
            grids,
            layout,
            points,
            n_path,
            n_boundary,
            lower,
            upper,
            row_lower,
            row_upper,
            jac_pattern,
            hess_pattern,
            point_slots,
            boundary_slots,
        })
    }

    pub fn layout(&self) -> &DecisionLayout {
        &self.layout
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn ocp(&self) -> &OcpDefinition {
        &self.ocp
    }

    /// Structured solution with the objective evaluated at `z`.
    pub fn extract(&self, z: &[f64]) -> Result<CollocationSolution> {
        let mut sol = self.layout.unpack(&self.ocp, &self.mesh, z)?;
        sol.objective = self.objective(z);
        Ok(sol)
    }

    fn times(&self, z: &[f64]) -> (f64, f64) {
        self.layout.times(z, &self.ocp.t0, &self.ocp.tf)
    }

    fn state(&self, z: &'_ [f64], p: usize) -> Vec<f64> {
        let o = self.layout.state_offset(p);
        z[o..o + self.ocp.n_x].to_vec()
    }

    fn control(&self, z: &'_ [f64], p: usize) -> Vec<f64> {
        let o = self.layout.control_offset(p);
        z[o..o + self.ocp.n_u].to_vec()
    }

    /// Element Hessian of a scalar function by central differences; returns
    /// the packed lower triangle and the gradient of `aux`.
    fn element_derivatives<F>(&self, v: &[f64], f: F) -> (Vec<f64>, Vec<f64>)
    where
        F: Fn(&[f64]) -> (f64, f64),
    {
        let n = v.len();
        let h: Vec<f64> = v.iter().map(|x| HESSIAN_STEP * x.abs().max(1.0)).collect();
        let mut w = v.to_vec();
        let (f0, _) = f(&w);
        let mut plus = vec![(0.0, 0.0); n];
        let mut minus = vec![(0.0, 0.0); n];
        for j in 0..n {
            w[j] = v[j] + h[j];
            plus[j] = f(&w);
            w[j] = v[j] - h[j];
            minus[j] = f(&w);
            w[j] = v[j];
        }
        let mut packed = Vec::with_capacity(n * (n + 1) / 2);
        for a in 0..n {
            for b in 0..=a {
                let val = if a == b {
                    (plus[a].0 - 2.0 * f0 + minus[a].0) / (h[a] * h[a])
                } else {
                    let mut at = |sa: f64, sb: f64| {
                        w[a] = v[a] + sa * h[a];
                        w[b] = v[b] + sb * h[b];
                        let r = f(&w).0;
                        w[a] = v[a];
                        w[b] = v[b];
                        r
                    };
                    (at(1.0, 1.0) - at(1.0, -1.0) - at(-1.0, 1.0) + at(-1.0, -1.0)) / (4.0 * h[a] * h[b])
                };
                packed.push(val);
            }
        }
        let aux_grad = (0..n).map(|j| (plus[j].1 - minus[j].1) / (2.0 * h[j])).collect();
        (packed, aux_grad)
    }
}

fn midpoint_or_zero(lo: f64, hi: f64) -> f64 {
    if lo.is_finite() && hi.is_finite() {
        0.5 * (lo + hi)
    } else {
        0.0f64.clamp(lo, hi)
    }
}

fn point_variables(layout: &DecisionLayout, p: usize) -> Vec<usize> {
    let xo = layout.state_offset(p);
    let uo = layout.control_offset(p);
    let mut v: Vec<usize> = (0..layout.n_x).map(|i| xo + i).collect();
    v.extend((0..layout.n_u).map(|i| uo + i));
    v.extend(layout.t0_index);
    v.extend(layout.tf_index);
    v
}

fn boundary_variables(layout: &DecisionLayout, ntot: usize) -> Vec<usize> {
    let first = layout.state_offset(0);
    let last = layout.state_offset(ntot);
    let mut v: Vec<usize> = (0..layout.n_x).map(|i| first + i).collect();
    v.extend((0..layout.n_x).map(|i| last + i));
    v.extend(layout.t0_index);
    v.extend(layout.tf_index);
    v
}

impl NlpProblem for CollocationNlp {
    fn num_variables(&self) -> usize {
        self.layout.dim
    }

    fn num_constraints(&self) -> usize {
        self.row_lower.len()
    }

    fn variable_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (self.lower.clone(), self.upper.clone())
    }

    fn constraint_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (self.row_lower.clone(), self.row_upper.clone())
    }

    fn objective(&self, z: &[f64]) -> f64 {
        let (t0, tf) = self.times(z);
        let ntot = self.layout.collocation_points();
        let mut j = self.ocp.mayer(&self.state(z, 0), t0, &self.state(z, ntot), tf);
        if self.ocp.has_lagrange() {
            let alpha = 0.5 * (tf - t0);
            let mut sum = 0.0;
            for (p, info) in self.points.iter().enumerate() {
                sum += info.scale * info.weight * self.ocp.lagrange(&self.state(z, p), &self.control(z, p), info.tau);
            }
            j += alpha * sum;
        }
        j
    }

    fn constraints(&self, z: &[f64], out: &mut [f64]) {
        let (t0, tf) = self.times(z);
        let alpha = 0.5 * (tf - t0);
        let nx = self.ocp.n_x;
        let ntot = self.layout.collocation_points();
        for (p, info) in self.points.iter().enumerate() {
            let k = info.interval;
            let x = self.state(z, p);
            let u = self.control(z, p);
            let f = self.ocp.dynamics(&x, &u, info.tau);
            let row = self.grids[k].diff_row(info.local);
            for r in 0..nx {
                let mut d = 0.0;
                for (j, dij) in row.iter().enumerate() {
                    d += dij * z[self.layout.state_offset(self.layout.point(k, j)) + r];
                }
                out[p * nx + r] = d - alpha * info.scale * f[r];
            }
            if self.n_path > 0 {
                let c = self.ocp.path(&x, &u, info.tau);
                let o = ntot * nx + p * self.n_path;
                out[o..o + self.n_path].copy_from_slice(&c);
            }
        }
        let b = self.ocp.boundary(&self.state(z, 0), t0, &self.state(z, ntot), tf);
        let o = ntot * (nx + self.n_path);
        out[o..o + self.n_boundary].copy_from_slice(&b);
    }

    fn jacobian_pattern(&self) -> Vec<(usize, usize)> {
        self.jac_pattern.clone()
    }

    fn objective_gradient(&self, z: &[f64], grad: &mut [f64]) {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let (t0, tf) = self.times(z);
        let alpha = 0.5 * (tf - t0);
        let (nx, nu) = (self.ocp.n_x, self.ocp.n_u);
        let ntot = self.layout.collocation_points();
        if self.ocp.has_lagrange() {
            let mut sum = 0.0;
            for (p, info) in self.points.iter().enumerate() {
                let mut x = self.state(z, p);
                let mut u = self.control(z, p);
                let c = info.scale * info.weight;
                sum += c * self.ocp.lagrange(&x, &u, info.tau);
                let xo = self.layout.state_offset(p);
                for i in 0..nx {
                    let h = GRADIENT_STEP * x[i].abs().max(1.0);
                    let v = x[i];
                    x[i] = v + h;
                    let fp = self.ocp.lagrange(&x, &u, info.tau);
                    x[i] = v - h;
                    let fm = self.ocp.lagrange(&x, &u, info.tau);
                    x[i] = v;
                    grad[xo + i] += alpha * c * (fp - fm) / (2.0 * h);
                }
                let uo = self.layout.control_offset(p);
                for i in 0..nu {
                    let h = GRADIENT_STEP * u[i].abs().max(1.0);
                    let v = u[i];
                    u[i] = v + h;
                    let fp = self.ocp.lagrange(&x, &u, info.tau);
                    u[i] = v - h;
                    let fm = self.ocp.lagrange(&x, &u, info.tau);
                    u[i] = v;
                    grad[uo + i] += alpha * c * (fp - fm) / (2.0 * h);
                }
            }
            if let Some(i) = self.layout.tf_index {
                grad[i] += 0.5 * sum;
            }
            if let Some(i) = self.layout.t0_index {
                grad[i] -= 0.5 * sum;
            }
        }
        if self.ocp.has_mayer() {
            let vars = boundary_variables(&self.layout, ntot);
            let mut v: Vec<f64> = vars.iter().map(|&i| z[i]).collect();
            let eval = |v: &[f64]| {
                let (t0, tf) = self.boundary_times(v, t0, tf);
                self.ocp.mayer(&v[..nx], t0, &v[nx..2 * nx], tf)
            };
            for (a, &idx) in vars.iter().enumerate() {
                let h = GRADIENT_STEP * v[a].abs().max(1.0);
                let base = v[a];
                v[a] = base + h;
                let fp = eval(&v);
                v[a] = base - h;
                let fm = eval(&v);
                v[a] = base;
                grad[idx] += (fp - fm) / (2.0 * h);
            }
        }
    }

    fn hessian_pattern(&self) -> Option<Vec<(usize, usize)>> {
        Some(self.hess_pattern.clone())
    }

    fn lagrangian_hessian(&self, z: &[f64], obj_factor: f64, lambda: &[f64], values: &mut [f64]) -> bool {
        values.iter_mut().for_each(|v| *v = 0.0);
        let (t0, tf) = self.times(z);
        let alpha = 0.5 * (tf - t0);
        let (nx, nu) = (self.ocp.n_x, self.ocp.n_u);
        let ntot = self.layout.collocation_points();
        let has_lagrange = self.ocp.has_lagrange();
        for (p, info) in self.points.iter().enumerate() {
            let lam = &lambda[p * nx..(p + 1) * nx];
            let mu = &lambda[ntot * nx + p * self.n_path..ntot * nx + (p + 1) * self.n_path];
            let mut v = self.state(z, p);
            v.extend(self.control(z, p));
            // (alpha-weighted part + path part, alpha-free part for time derivatives)
            let eval = |w: &[f64]| {
                let (x, u) = w.split_at(nx);
                let f = self.ocp.dynamics(x, u, info.tau);
                let mut g = -lam.iter().zip(&f).map(|(l, f)| l * f).sum::<f64>();
                if has_lagrange {
                    g += obj_factor * info.weight * self.ocp.lagrange(x, u, info.tau);
                }
                g *= info.scale;
                let mut total = alpha * g;
                if self.n_path > 0 {
                    let c = self.ocp.path(x, u, info.tau);
                    total += mu.iter().zip(&c).map(|(m, c)| m * c).sum::<f64>();
                }
                (total, g)
            };
            let (packed, g_grad) = self.element_derivatives(&v, eval);
            let slots = &self.point_slots[p];
            let nv = nx + nu;
            let total_vars = nv + self.layout.t0_index.is_some() as usize + self.layout.tf_index.is_some() as usize;
            let mut s = 0;
            for a in 0..total_vars {
                for b in 0..=a {
                    if a < nv {
                        values[slots[s]] += packed[a * (a + 1) / 2 + b];
                    } else if b < nv {
                        // the horizon scale is linear in the times
                        let is_t0 = self.layout.t0_index.is_some() && a == nv;
                        let sign = if is_t0 { -0.5 } else { 0.5 };
                        values[slots[s]] += sign * g_grad[b];
                    }
                    s += 1;
                }
            }
        }
        let vars = boundary_variables(&self.layout, ntot);
        let nu_b = &lambda[ntot * (nx + self.n_path)..];
        let v: Vec<f64> = vars.iter().map(|&i| z[i]).collect();
        let eval = |w: &[f64]| {
            let (t0, tf) = self.boundary_times(w, t0, tf);
            let (x0, xf) = (&w[..nx], &w[nx..2 * nx]);
            let mut total = obj_factor * self.ocp.mayer(x0, t0, xf, tf);
            let b = self.ocp.boundary(x0, t0, xf, tf);
            total += nu_b.iter().zip(&b).map(|(l, b)| l * b).sum::<f64>();
            (total, 0.0)
        };
        let (packed, _) = self.element_derivatives(&v, eval);
        for (s, val) in self.boundary_slots.iter().zip(&packed) {
            values[*s] += val;
        }
        true
    }
}

impl CollocationNlp {
    /// Times from a boundary element vector `[x0, xf, t0?, tf?]`.
    fn boundary_times(&self, w: &[f64], t0: f64, tf: f64) -> (f64, f64) {
        let nx = self.ocp.n_x;
        let mut i = 2 * nx;
        let t0 = if self.layout.t0_index.is_some() {
            i += 1;
            w[i - 1]
        } else {
            t0
        };
        let tf = if self.layout.tf_index.is_some() { w[i] } else { tf };
        (t0, tf)
    }
}

/// Straight-line guess between pinned boundary values, constants where only
/// one end is pinned, bound midpoints (or zero) otherwise; controls at zero
/// projected onto their bounds; free times at their guess.
pub fn initial_guess(ocp: &OcpDefinition, mesh: &Mesh) -> Vec<f64> {
    let layout = DecisionLayout::new(ocp, mesh);
    let ntot = layout.collocation_points();
    let mut z = vec![0.0; layout.dim];
    let mut taus = Vec::with_capacity(ntot + 1);
    for k in 0..mesh.num_intervals() {
        let g = shared_grid(mesh.count(k)).expect("mesh counts are positive");
        let map = mesh.interval(k);
        taus.extend(g.points().iter().map(|&s| map.to_tau(s)));
    }
    taus.push(1.0);
    for (p, &tau) in taus.iter().enumerate() {
        let o = layout.state_offset(p);
        for i in 0..ocp.n_x {
            let (lo, hi) = ocp.state_bounds[i];
            let v = match (ocp.initial_state[i], ocp.final_state[i]) {
                (Some(a), Some(b)) => a + (b - a) * (tau + 1.0) / 2.0,
                (Some(a), None) | (None, Some(a)) => a,
                (None, None) => midpoint_or_zero(lo, hi),
            };
            z[o + i] = v.clamp(lo, hi);
        }
        if p < ntot {
            let o = layout.control_offset(p);
            for i in 0..ocp.n_u {
                let (lo, hi) = ocp.control_bounds[i];
                z[o + i] = 0.0f64.clamp(lo, hi);
            }
        }
    }
    if let Some(i) = layout.t0_index {
        z[i] = ocp.t0.guess();
    }
    if let Some(i) = layout.tf_index {
        z[i] = ocp.tf.guess();
    }
    z
}

/// Decision vector for `mesh` obtained by evaluating a previous solution's
/// interpolants at the new points.
pub fn interpolated_guess(ocp: &OcpDefinition, mesh: &Mesh, previous: &CollocationSolution) -> Vec<f64> {
    let layout = DecisionLayout::new(ocp, mesh);
    let ntot = layout.collocation_points();
    let mut z = vec![0.0; layout.dim];
    let old_states: Vec<Interpolant> =
        (0..previous.mesh.num_intervals()).map(|k| previous.state_interpolant(k)).collect();
    let old_controls: Vec<Interpolant> =
        (0..previous.mesh.num_intervals()).map(|k| previous.control_interpolant(k)).collect();
    let at = |tau: f64| {
        let k = previous.mesh.locate(tau);
        let zeta = previous.mesh.interval(k).to_zeta(tau);
        (old_states[k].eval(zeta), old_controls[k].eval(zeta))
    };
    let mut p = 0;
    for k in 0..mesh.num_intervals() {
        let g = shared_grid(mesh.count(k)).expect("mesh counts are positive");
        let map: IntervalMap = mesh.interval(k);
        for &s in g.points() {
            let (x, u) = at(map.to_tau(s));
            let o = layout.state_offset(p);
            z[o..o + ocp.n_x].copy_from_slice(&x);
            let o = layout.control_offset(p);
            z[o..o + ocp.n_u].copy_from_slice(&u);
            p += 1;
        }
    }
    let o = layout.state_offset(ntot);
    z[o..o + ocp.n_x].copy_from_slice(previous.final_state());
    if let Some(i) = layout.t0_index {
        z[i] = previous.t0;
    }
    if let Some(i) = layout.tf_index {
        z[i] = previous.tf;
    }
    z
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nlp::{fd_jacobian, NlpProblem};
    use crate::problem::{hyper_sensitive, robot_arm};

    #[test]
    fn layout_dimensions() {
        let mesh = Mesh::uniform(2, 3).unwrap();
        let (nlp, layout) = assemble(&robot_arm(), &mesh).unwrap();
        assert_eq!(layout.dim, 6 * 7 + 3 * 6 + 1);
        assert_eq!(nlp.num_constraints(), 6 * 6 + 12);
        let (nlp, layout) = assemble(&hyper_sensitive(10.0), &Mesh::uniform(1, 1).unwrap()).unwrap();
        assert_eq!(layout.dim, 3);
        assert_eq!(nlp.num_constraints(), 1 + 2);
    }

    #[test]
    fn pack_unpack_round_trip() {
        let ocp = robot_arm();
        let mesh = Mesh::new(vec![-1.0, -0.2, 1.0], vec![3, 5]).unwrap();
        let layout = DecisionLayout::new(&ocp, &mesh);
        let z: Vec<f64> = (0..layout.dim).map(|i| i as f64 * 0.5 - 3.0).collect();
        let sol = layout.unpack(&ocp, &mesh, &z).unwrap();
        assert_eq!(sol.states[0][3], sol.states[1][0]);
        assert_eq!(layout.pack(&sol), z);
        assert!(layout.unpack(&ocp, &mesh, &z[1..]).is_err());
    }

    #[test]
    fn jacobian_pattern_covers_dense_differences() {
        let ocp = robot_arm();
        let mesh = Mesh::new(vec![-1.0, 0.1, 1.0], vec![2, 3]).unwrap();
        let (nlp, _) = assemble(&ocp, &mesh).unwrap();
        let z: Vec<f64> =
            initial_guess(&ocp, &mesh).iter().enumerate().map(|(i, v)| v + 0.01 * ((i * 7 % 11) as f64)).collect();
        let n = nlp.num_variables();
        let m = nlp.num_constraints();
        let pattern: std::collections::HashSet<(usize, usize)> = nlp.jacobian_pattern().into_iter().collect();
        let mut base = vec![0.0; m];
        nlp.constraints(&z, &mut base);
        for j in 0..n {
            let mut zz = z.clone();
            zz[j] += 1e-3;
            let mut c = vec![0.0; m];
            nlp.constraints(&zz, &mut c);
            for r in 0..m {
                if (c[r] - base[r]).abs() > 1e-13 {
                    assert!(pattern.contains(&(r, j)), "missing ({r},{j})");
                }
            }
        }
        let jac = fd_jacobian(&nlp, &z, 6e-6);
        assert_eq!(jac.nnz(), pattern.len());
    }

    #[test]
    fn hessian_matches_differenced_gradient() {
        let ocp = robot_arm();
        let mesh = Mesh::uniform(2, 2).unwrap();
        let (nlp, _) = assemble(&ocp, &mesh).unwrap();
        let z: Vec<f64> =
            initial_guess(&ocp, &mesh).iter().enumerate().map(|(i, v)| v + 0.05 * ((i * 5 % 7) as f64) + 0.3).collect();
        let m = nlp.num_constraints();
        let lambda: Vec<f64> = (0..m).map(|r| ((r * 3 % 5) as f64) - 2.0).collect();
        let pattern = nlp.hessian_pattern().unwrap();
        let mut values = vec![0.0; pattern.len()];
        assert!(nlp.lagrangian_hessian(&z, 1.0, &lambda, &mut values));
        let lag = |z: &[f64]| {
            let mut c = vec![0.0; m];
            nlp.constraints(z, &mut c);
            nlp.objective(z) + c.iter().zip(&lambda).map(|(c, l)| c * l).sum::<f64>()
        };
        let h = 1e-3;
        let at = |i: usize, j: usize, si: f64, sj: f64| {
            let mut zz = z.clone();
            zz[i] += si * h;
            zz[j] += sj * h;
            lag(&zz)
        };
        for (&(i, j), &v) in pattern.iter().zip(&values) {
            let d =
                (at(i, j, 1.0, 1.0) - at(i, j, 1.0, -1.0) - at(i, j, -1.0, 1.0) + at(i, j, -1.0, -1.0)) / (4.0 * h * h);
            assert!((d - v).abs() < 1e-4 * v.abs().max(1.0), "({i},{j}) {d} vs {v}");
        }
    }

    #[test]
    fn guess_is_linear_between_pinned_values() {
        let ocp = hyper_sensitive(100.0);
        let mesh = Mesh::uniform(2, 2).unwrap();
        let layout = DecisionLayout::new(&ocp, &mesh);
        let z = initial_guess(&ocp, &mesh);
        assert_eq!(z[layout.state_offset(0)], 1.5);
        assert_eq!(z[layout.state_offset(4)], 1.0);
        assert_eq!(z[layout.state_offset(2)], 1.25);
        assert_eq!(z[layout.control_offset(1)], 0.0);
    }
}
