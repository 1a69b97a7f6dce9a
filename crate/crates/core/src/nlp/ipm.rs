//! Primal-dual interior-point method with a filter line search.
//!
//! Inequality rows get slack variables, all bounds are handled by a
//! logarithmic barrier, and each Newton system is solved with the bordered
//! band solver. Convexity of the step is enforced by an inertia-free
//! curvature test that adds a multiple of the identity to the Hessian.

use super::fd::fd_jacobian;
use super::linalg::BorderedSolver;
use super::{
    constraint_violation, HessianMode, IterationRecord, NlpProblem, NlpSolver, SolveOutcome, SolveStatus, SolverOptions,
};

const BOUND_PUSH: f64 = 1e-2;
const BOUND_RELAX: f64 = 1e-8;
const MAX_GRADIENT: f64 = 100.0;
const KAPPA_SIGMA: f64 = 1e10;
const ARMIJO: f64 = 1e-4;
const CURVATURE: f64 = 1e-10;
const MAX_MULTIPLIER_GUESS: f64 = 1e3;
const GAMMA_THETA: f64 = 1e-5;
const GAMMA_PHI: f64 = 1e-8;
const S_THETA: f64 = 1.1;
const S_PHI: f64 = 2.3;
const MAX_POLISH_CHANGES: usize = 50;
const RESTORATION_STEPS: usize = 100;
const MAX_RESTORATIONS: usize = 5;

/// Interior-point NLP solver.
#[derive(Debug, Clone, Default)]
pub struct InteriorPoint {
    pub options: SolverOptions,
}

impl InteriorPoint {
    pub fn new(options: SolverOptions) -> Self {
        Self { options }
    }
}

impl NlpSolver for InteriorPoint {
    fn solve(&self, problem: &dyn NlpProblem, guess: &[f64]) -> SolveOutcome {
        let mut run = match Run::new(problem, &self.options, guess) {
            Ok(run) => run,
            Err(message) => {
                return SolveOutcome {
                    z: guess.to_vec(),
                    multipliers: vec![0.0; problem.num_constraints()],
                    status: SolveStatus::NumericFailure,
                    objective: f64::NAN,
                    kkt_residual: f64::INFINITY,
                    constraint_violation: f64::INFINITY,
                    iterations: 0,
                    log: Vec::new(),
                    message: Some(message),
                }
            }
        };
        let (status, message) = run.iterate();
        run.outcome(status, message)
    }

    fn options(&self) -> &SolverOptions {
        &self.options
    }
}

enum Hessian {
    /// Supplied by the problem; pattern is the problem's.
    Problem(Vec<(usize, usize)>),
    /// Dense lower triangle from differences of Lagrangian gradients.
    Differences(Vec<(usize, usize)>),
    /// Dense lower triangle of a damped BFGS matrix (full row-major storage).
    Bfgs(Vec<(usize, usize)>, Vec<f64>),
}

impl Hessian {
    fn pattern(&self) -> &[(usize, usize)] {
        match self {
            Hessian::Problem(p) | Hessian::Differences(p) | Hessian::Bfgs(p, _) => p,
        }
    }
}

/// Function values at a primal point.
#[derive(Clone)]
struct Eval {
    f: f64,
    h: Vec<f64>,
}

struct Run<'a> {
    problem: &'a dyn NlpProblem,
    opts: &'a SolverOptions,
    n: usize,
    m: usize,
    nx: usize,
    xl: Vec<f64>,
    xu: Vec<f64>,
    /// Bounds before relaxation.
    bl: Vec<f64>,
    bu: Vec<f64>,
    row_slack: Vec<Option<usize>>,
    target: Vec<f64>,
    obj_scale: f64,
    row_scale: Vec<f64>,
    jac_pattern: Vec<(usize, usize)>,
    hessian: Hessian,
    kkt: BorderedSolver,
    kkt_entries: Vec<(usize, usize)>,
    x: Vec<f64>,
    y: Vec<f64>,
    vl: Vec<f64>,
    vu: Vec<f64>,
    mu: f64,
    filter: Vec<(f64, f64)>,
    theta_max: f64,
    theta_min: f64,
    last_reg: f64,
    log: Vec<IterationRecord>,
    iterations: usize,
    kkt_residual: f64,
}

impl<'a> Run<'a> {
    fn new(problem: &'a dyn NlpProblem, opts: &'a SolverOptions, guess: &[f64]) -> Result<Self, String> {
        let n = problem.num_variables();
        let m = problem.num_constraints();
        if guess.len() != n {
            return Err(format!("guess has {} entries, expected {n}", guess.len()));
        }
        let (zl, zu) = problem.variable_bounds();
        let (cl, cu) = problem.constraint_bounds();
        for i in 0..n {
            if !(zl[i] < zu[i]) {
                return Err(format!("variable {i} has empty or degenerate bounds"));
            }
        }
        for r in 0..m {
            if !(cl[r] <= cu[r]) {
                return Err(format!("constraint row {r} has empty bounds"));
            }
        }
        // never relax by more than the feasibility test tolerates
        let relax_factor = BOUND_RELAX.min(0.1 * opts.feasibility_tolerance);
        let relax = |v: f64, dir: f64| {
            if v.is_finite() {
                v + dir * relax_factor * v.abs().max(1.0)
            } else {
                v
            }
        };

        // primal start pushed inside the box
        let mut z: Vec<f64> = guess.to_vec();
        for i in 0..n {
            z[i] = push_inside(z[i], zl[i], zu[i]);
        }

        let jac_pattern = problem.jacobian_pattern();
        let mut grad = vec![0.0; n];
        problem.objective_gradient(&z, &mut grad);
        let jac = fd_jacobian(problem, &z, opts.fd_step);
        let mut c0 = vec![0.0; m];
        problem.constraints(&z, &mut c0);
        let f0 = problem.objective(&z);
        if !f0.is_finite() {
            return Err("objective is not finite at the starting point".into());
        }
        if let Some(r) = c0.iter().position(|v| !v.is_finite()) {
            return Err(format!("constraint row {r} is not finite at the starting point"));
        }
        if let Some(k) = jac.values.iter().position(|v| !v.is_finite()) {
            return Err(format!("constraint row {} has a non-finite derivative", jac.rows[k]));
        }
        let gmax = grad.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let obj_scale = if gmax > MAX_GRADIENT { (MAX_GRADIENT / gmax).max(1e-8) } else { 1.0 };
        let mut row_max = vec![0.0f64; m];
        for k in 0..jac.nnz() {
            row_max[jac.rows[k]] = row_max[jac.rows[k]].max(jac.values[k].abs());
        }
        let row_scale: Vec<f64> =
            row_max.iter().map(|&g| if g > MAX_GRADIENT { (MAX_GRADIENT / g).max(1e-8) } else { 1.0 }).collect();

        let mut bl = zl.clone();
        let mut bu = zu.clone();
        let mut xl: Vec<f64> = zl.iter().map(|&v| relax(v, -1.0)).collect();
        let mut xu: Vec<f64> = zu.iter().map(|&v| relax(v, 1.0)).collect();
        let mut x = z;
        let mut row_slack = vec![None; m];
        let mut target = vec![0.0; m];
        for r in 0..m {
            let (lo, hi) = (cl[r] * row_scale[r], cu[r] * row_scale[r]);
            if cl[r] == cu[r] {
                target[r] = lo;
            } else {
                row_slack[r] = Some(x.len());
                bl.push(lo);
                bu.push(hi);
                let (lo, hi) = (relax(lo, -1.0), relax(hi, 1.0));
                xl.push(lo);
                xu.push(hi);
                x.push(push_inside(c0[r] * row_scale[r], lo, hi));
            }
        }
        let nx = x.len();

        let hessian = match opts.hessian {
            HessianMode::Exact => match problem.hessian_pattern() {
                Some(p) => Hessian::Problem(p),
                None => Hessian::Differences(dense_lower(n)),
            },
            HessianMode::DampedBfgs => {
                let mut b = vec![0.0; n * n];
                for i in 0..n {
                    b[i * n + i] = obj_scale.max(1e-4);
                }
                Hessian::Bfgs(dense_lower(n), b)
            }
        };

        // KKT layout: hessian entries, primal diagonal, jacobian, slack -1, dual diagonal.
        let mut kkt_entries: Vec<(usize, usize)> = hessian.pattern().to_vec();
        kkt_entries.extend((0..nx).map(|i| (i, i)));
        kkt_entries.extend(jac_pattern.iter().map(|&(r, c)| (nx + r, c)));
        for r in 0..m {
            if let Some(s) = row_slack[r] {
                kkt_entries.push((nx + r, s));
            }
        }
        kkt_entries.extend((0..m).map(|r| (nx + r, nx + r)));
        let keys = kkt_keys(n, m, nx, &jac_pattern, &row_slack);
        let kkt = BorderedSolver::analyze(nx + m, &kkt_entries, &keys);

        let vl = xl.iter().map(|v| if v.is_finite() { 1.0 } else { 0.0 }).collect();
        let vu = xu.iter().map(|v| if v.is_finite() { 1.0 } else { 0.0 }).collect();
        let mut run = Self {
            problem,
            opts,
            n,
            m,
            nx,
            xl,
            xu,
            bl,
            bu,
            row_slack,
            target,
            obj_scale,
            row_scale,
            jac_pattern,
            hessian,
            kkt,
            kkt_entries,
            x,
            y: vec![0.0; m],
            vl,
            vu,
            mu: opts.initial_barrier,
            filter: Vec::new(),
            theta_max: f64::INFINITY,
            theta_min: 0.0,
            last_reg: 0.0,
            log: Vec::new(),
            iterations: 0,
            kkt_residual: f64::INFINITY,
        };
        run.estimate_multipliers(&grad, &jac.values);
        Ok(run)
    }

    fn has_lower(&self, i: usize) -> bool {
        self.xl[i].is_finite()
    }

    fn has_upper(&self, i: usize) -> bool {
        self.xu[i].is_finite()
    }

    fn evaluate(&self, x: &[f64]) -> Option<Eval> {
        let z = &x[..self.n];
        let f = self.problem.objective(z) * self.obj_scale;
        let mut c = vec![0.0; self.m];
        self.problem.constraints(z, &mut c);
        if !f.is_finite() || c.iter().any(|v| !v.is_finite()) {
            return None;
        }
        for (v, s) in c.iter_mut().zip(&self.row_scale) {
            *v *= s;
        }
        let h = (0..self.m)
            .map(|r| match self.row_slack[r] {
                Some(s) => c[r] - x[s],
                None => c[r] - self.target[r],
            })
            .collect();
        Some(Eval { f, h })
    }

    /// Scaled objective gradient (padded with zeros for slacks) and scaled
    /// Jacobian values in pattern order.
    fn derivatives(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let z = &x[..self.n];
        let mut g = vec![0.0; self.nx];
        self.problem.objective_gradient(z, &mut g[..self.n]);
        for v in &mut g[..self.n] {
            *v *= self.obj_scale;
        }
        let jac = fd_jacobian(self.problem, z, self.opts.fd_step);
        let values = jac.rows.iter().zip(&jac.values).map(|(&r, &v)| v * self.row_scale[r]).collect();
        (g, values)
    }

    /// `A^T y` over all primal variables.
    fn jac_t(&self, jac: &[f64], y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.nx];
        for (&(r, c), &v) in self.jac_pattern.iter().zip(jac) {
            out[c] += v * y[r];
        }
        for r in 0..self.m {
            if let Some(s) = self.row_slack[r] {
                out[s] -= y[r];
            }
        }
        out
    }

    fn barrier(&self, x: &[f64], f: f64) -> f64 {
        let mut phi = f;
        for i in 0..self.nx {
            if self.has_lower(i) {
                phi -= self.mu * (x[i] - self.xl[i]).ln();
            }
            if self.has_upper(i) {
                phi -= self.mu * (self.xu[i] - x[i]).ln();
            }
        }
        phi
    }

    /// Filter acceptance of a trial point. `Some(true)` marks an
    /// objective-decrease step that leaves the filter unchanged.
    fn acceptable(&self, x: &[f64], e: &Eval, theta: f64, phi: f64, slope: f64, alpha: f64) -> Option<bool> {
        let t: f64 = e.h.iter().map(|v| v.abs()).sum();
        let p = self.barrier(x, e.f);
        if !p.is_finite() || t > self.theta_max {
            return None;
        }
        if self.filter.iter().any(|&(ft, fp)| t >= ft && p >= fp) {
            return None;
        }
        let switching = slope < 0.0 && alpha * (-slope).powf(S_PHI) > theta.powf(S_THETA);
        if switching && theta <= self.theta_min {
            let armijo = p <= phi + ARMIJO * alpha * slope + 10.0 * f64::EPSILON * phi.abs();
            return armijo.then_some(true);
        }
        (t <= (1.0 - GAMMA_THETA) * theta || p <= phi - GAMMA_PHI * theta).then_some(false)
    }

    /// Optimality error of the barrier problem with parameter `mu`.
    fn optimality_error(&self, grad: &[f64], jac: &[f64], e: &Eval, mu: f64) -> f64 {
        let aty = self.jac_t(jac, &self.y);
        let mut dual: f64 = 0.0;
        let mut compl: f64 = 0.0;
        for i in 0..self.nx {
            let r = grad[i] + aty[i] - self.vl[i] + self.vu[i];
            dual = dual.max(r.abs());
            if self.has_lower(i) {
                compl = compl.max(((self.x[i] - self.xl[i]) * self.vl[i] - mu).abs());
            }
            if self.has_upper(i) {
                compl = compl.max(((self.xu[i] - self.x[i]) * self.vu[i] - mu).abs());
            }
        }
        let primal = e.h.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let bounded = (0..self.nx).map(|i| self.has_lower(i) as usize + self.has_upper(i) as usize).sum::<usize>();
        let vsum: f64 = self.vl.iter().chain(&self.vu).map(|v| v.abs()).sum();
        let ysum: f64 = self.y.iter().map(|v| v.abs()).sum();
        let s_max = 100.0;
        let s_d = ((ysum + vsum) / ((self.m + bounded).max(1) as f64)).max(s_max) / s_max;
        let s_c = (vsum / (bounded.max(1) as f64)).max(s_max) / s_max;
        (dual / s_d).max(primal).max(compl / s_c)
    }

    /// Lower-triangle Hessian values of the scaled Lagrangian.
    fn hessian_values(&mut self, x: &[f64]) -> Vec<f64> {
        let n = self.n;
        let lambda: Vec<f64> = self.y.iter().zip(&self.row_scale).map(|(y, s)| y * s).collect();
        match &self.hessian {
            Hessian::Problem(p) => {
                let mut v = vec![0.0; p.len()];
                if !self.problem.lagrangian_hessian(&x[..n], self.obj_scale, &lambda, &mut v) {
                    v.iter_mut().for_each(|a| *a = 0.0);
                }
                v
            }
            Hessian::Differences(p) => {
                let mut cols = Vec::with_capacity(n);
                let mut xx = x.to_vec();
                for j in 0..n {
                    let h = 1e-4 * x[j].abs().max(1.0);
                    xx[j] = x[j] + h;
                    let gp = self.lagrangian_gradient(&xx);
                    xx[j] = x[j] - h;
                    let gm = self.lagrangian_gradient(&xx);
                    xx[j] = x[j];
                    cols.push((0..n).map(|i| (gp[i] - gm[i]) / (2.0 * h)).collect::<Vec<f64>>());
                }
                p.iter().map(|&(i, j)| 0.5 * (cols[j][i] + cols[i][j])).collect()
            }
            Hessian::Bfgs(p, b) => p.iter().map(|&(i, j)| b[i * n + j]).collect(),
        }
    }

    fn lagrangian_gradient(&self, x: &[f64]) -> Vec<f64> {
        let (g, jac) = self.derivatives(x);
        let aty = self.jac_t(&jac, &self.y);
        (0..self.n).map(|i| g[i] + aty[i]).collect()
    }

    fn kkt_values(&self, hess: &[f64], sigma: &[f64], jac: &[f64], reg_w: f64, reg_c: f64) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.kkt_entries.len());
        v.extend_from_slice(hess);
        v.extend(sigma.iter().map(|s| s + reg_w));
        v.extend_from_slice(jac);
        v.extend(self.row_slack.iter().filter(|s| s.is_some()).map(|_| -1.0));
        v.extend(std::iter::repeat_n(-reg_c, self.m));
        v
    }

    fn solve_refined(&self, values: &[f64], rhs: &[f64]) -> Vec<f64> {
        let mut sol = self.kkt.solve(rhs);
        for _ in 0..2 {
            let k = self.kkt.multiply(values, &sol);
            let res: Vec<f64> = rhs.iter().zip(&k).map(|(b, a)| b - a).collect();
            let rn = res.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let bn = rhs.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if rn <= 1e-15 * bn.max(1.0) {
                break;
            }
            let d = self.kkt.solve(&res);
            sol.iter_mut().zip(&d).for_each(|(s, d)| *s += d);
        }
        sol
    }

    fn estimate_multipliers(&mut self, grad: &[f64], jac_unscaled: &[f64]) {
        if self.m == 0 {
            return;
        }
        let jac: Vec<f64> =
            self.jac_pattern.iter().zip(jac_unscaled).map(|(&(r, _), v)| v * self.row_scale[r]).collect();
        let hess = vec![0.0; self.hessian.pattern().len()];
        let ones = vec![1.0; self.nx];
        let values = self.kkt_values(&hess, &ones, &jac, 0.0, 0.0);
        if !self.kkt.factor(&values) {
            return;
        }
        let mut rhs = vec![0.0; self.nx + self.m];
        for i in 0..self.n {
            rhs[i] = -(grad[i] * self.obj_scale);
        }
        for i in 0..self.nx {
            rhs[i] += self.vl[i] - self.vu[i];
        }
        let sol = self.solve_refined(&values, &rhs);
        let y = &sol[self.nx..];
        if y.iter().all(|v| v.is_finite() && v.abs() <= MAX_MULTIPLIER_GUESS) {
            self.y = y.to_vec();
        }
    }

    fn fraction_to_boundary(&self, x: &[f64], dx: &[f64], tau: f64) -> f64 {
        let mut alpha: f64 = 1.0;
        for i in 0..self.nx {
            if dx[i] < 0.0 && self.has_lower(i) {
                alpha = alpha.min(-tau * (x[i] - self.xl[i]) / dx[i]);
            }
            if dx[i] > 0.0 && self.has_upper(i) {
                alpha = alpha.min(tau * (self.xu[i] - x[i]) / dx[i]);
            }
        }
        alpha
    }

    fn multiplier_step_limit(&self, dvl: &[f64], dvu: &[f64], tau: f64) -> f64 {
        let mut alpha: f64 = 1.0;
        for i in 0..self.nx {
            if dvl[i] < 0.0 && self.has_lower(i) {
                alpha = alpha.min(-tau * self.vl[i] / dvl[i]);
            }
            if dvu[i] < 0.0 && self.has_upper(i) {
                alpha = alpha.min(-tau * self.vu[i] / dvu[i]);
            }
        }
        alpha
    }

    fn log_line(&self, rec: &IterationRecord) {
        let line = format!(
            "iter {:4} mu {:9.2e} phi {:14.7e} step {:9.2e} kkt {:9.2e} inf {:9.2e} reg {:8.1e}",
            rec.iteration,
            rec.barrier,
            rec.barrier_objective_after,
            rec.step,
            rec.kkt_residual,
            rec.infeasibility,
            rec.regularization
        );
        if self.opts.verbose {
            log::info!("{line}");
        } else {
            log::trace!("{line}");
        }
    }

    fn iterate(&mut self) -> (SolveStatus, Option<String>) {
        let tol = self.opts.kkt_tolerance;
        let mu_min = tol / 11.0;
        let mut current = match self.evaluate(&self.x.clone()) {
            Some(e) => e,
            None => return (SolveStatus::NumericFailure, Some("non-finite values at start".into())),
        };
        let mut force_mu_decrease = false;
        let mut failures = 0;
        let mut restorations = 0;
        loop {
            let x = self.x.clone();
            let (grad, jac) = self.derivatives(&x);
            if let Some(k) = jac.iter().position(|v| !v.is_finite()) {
                return (
                    SolveStatus::NumericFailure,
                    Some(format!("constraint row {} has a non-finite derivative", self.jac_pattern[k].0)),
                );
            }
            let e0 = self.optimality_error(&grad, &jac, &current, 0.0);
            self.kkt_residual = e0;
            // iterates live inside slightly relaxed bounds; prefer the point
            // projected back onto the true ones when it is feasible too
            let feas = self.opts.feasibility_tolerance;
            let projected: Vec<f64> = (0..self.n).map(|i| x[i].clamp(self.bl[i], self.bu[i])).collect();
            let finish = if e0 > tol {
                None
            } else if constraint_violation(self.problem, &projected) <= feas {
                Some(projected)
            } else if constraint_violation(self.problem, &x[..self.n]) <= feas {
                Some(x[..self.n].to_vec())
            } else {
                None
            };
            if let Some(z) = finish {
                self.x[..self.n].copy_from_slice(&z);
                self.polish();
                return (SolveStatus::Optimal, None);
            }
            if self.iterations >= self.opts.max_iterations {
                return (SolveStatus::MaxIterations, None);
            }
            let mu_before = self.mu;
            while self.mu > mu_min
                && (force_mu_decrease || self.optimality_error(&grad, &jac, &current, self.mu) <= 10.0 * self.mu)
            {
                self.mu = mu_min.max((0.2 * self.mu).min(self.mu.powf(1.5)));
                force_mu_decrease = false;
            }
            force_mu_decrease = false;
            if self.mu != mu_before {
                self.filter.clear();
            }

            let hess = self.hessian_values(&x);
            let mut sigma = vec![0.0; self.nx];
            let mut grad_phi = grad.clone();
            for i in 0..self.nx {
                if self.has_lower(i) {
                    let d = x[i] - self.xl[i];
                    sigma[i] += self.vl[i] / d;
                    grad_phi[i] -= self.mu / d;
                }
                if self.has_upper(i) {
                    let d = self.xu[i] - x[i];
                    sigma[i] += self.vu[i] / d;
                    grad_phi[i] += self.mu / d;
                }
            }
            let mut rhs: Vec<f64> = grad_phi.iter().map(|v| -v).collect();
            rhs.extend(current.h.iter().map(|v| -v));

            // regularize until the step has positive curvature
            let mut reg_w = 0.0;
            let mut reg_c = 0.0;
            let step = loop {
                let values = self.kkt_values(&hess, &sigma, &jac, reg_w, reg_c);
                if !self.kkt.factor(&values) {
                    if reg_c == 0.0 {
                        reg_c = 1e-8 * self.mu.powf(0.25);
                    } else {
                        reg_w = next_regularization(reg_w, self.last_reg);
                    }
                    if reg_w > 1e40 {
                        return (SolveStatus::NumericFailure, Some("singular Newton system".into()));
                    }
                    continue;
                }
                let sol = self.solve_refined(&values, &rhs);
                let dx = &sol[..self.nx];
                let mut curv = 0.0;
                let hd = hess_mul(self.hessian.pattern(), &hess, &dx[..self.n], self.nx);
                let mut dd = 0.0;
                for i in 0..self.nx {
                    curv += dx[i] * (hd[i] + (sigma[i] + reg_w) * dx[i]);
                    dd += dx[i] * dx[i];
                }
                if sol.iter().all(|v| v.is_finite()) && curv >= CURVATURE * dd {
                    break sol;
                }
                reg_w = next_regularization(reg_w, self.last_reg);
                if reg_w > 1e40 {
                    return (SolveStatus::NumericFailure, Some("could not convexify Newton system".into()));
                }
            };
            if reg_w > 0.0 {
                self.last_reg = reg_w;
            }
            let dx: Vec<f64> = step[..self.nx].to_vec();
            let y_plus: Vec<f64> = step[self.nx..].to_vec();
            let dy: Vec<f64> = y_plus.iter().zip(&self.y).map(|(a, b)| a - b).collect();
            let mut dvl = vec![0.0; self.nx];
            let mut dvu = vec![0.0; self.nx];
            for i in 0..self.nx {
                if self.has_lower(i) {
                    let d = x[i] - self.xl[i];
                    dvl[i] = self.mu / d - self.vl[i] - self.vl[i] / d * dx[i];
                }
                if self.has_upper(i) {
                    let d = self.xu[i] - x[i];
                    dvu[i] = self.mu / d - self.vu[i] + self.vu[i] / d * dx[i];
                }
            }
            let tau = (1.0 - self.mu).max(0.99);
            let alpha_max = self.fraction_to_boundary(&x, &dx, tau);
            let alpha_v = self.multiplier_step_limit(&dvl, &dvu, tau);
            let theta: f64 = current.h.iter().map(|v| v.abs()).sum();
            let phi0 = self.barrier(&x, current.f);
            let slope: f64 = grad_phi.iter().zip(&dx).map(|(g, d)| g * d).sum();
            if self.filter.is_empty() {
                self.theta_max = 1e4 * theta.max(1.0);
                self.theta_min = 1e-4 * theta.max(1.0);
                self.filter.push((self.theta_max, f64::NEG_INFINITY));
            }
            let alpha_min = if slope < 0.0 {
                let a = GAMMA_THETA.min(GAMMA_PHI * theta / -slope).min(theta.powf(S_THETA) / (-slope).powf(S_PHI));
                0.05 * a
            } else {
                0.05 * GAMMA_THETA
            }
            .max(1e-16);

            let tiny = (0..self.nx).all(|i| dx[i].abs() <= 1e-15 * x[i].abs().max(1.0));
            let mut accepted: Option<(Vec<f64>, Eval, f64, bool)> = None;
            if tiny {
                let xt: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a + alpha_max * d).collect();
                if let Some(e) = self.evaluate(&xt) {
                    accepted = Some((xt, e, alpha_max, false));
                    force_mu_decrease = true;
                }
            } else {
                let mut alpha = alpha_max;
                let mut first = true;
                while alpha >= alpha_min {
                    let xt: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a + alpha * d).collect();
                    if let Some(e) = self.evaluate(&xt) {
                        if let Some(f_type) = self.acceptable(&xt, &e, theta, phi0, slope, alpha) {
                            accepted = Some((xt, e, alpha, f_type));
                            break;
                        }
                        let trial_theta: f64 = e.h.iter().map(|v| v.abs()).sum();
                        if first && trial_theta >= theta {
                            let soc = self.second_order_correction(
                                &x, &current, &e, alpha, &grad_phi, &hess, &sigma, &jac, reg_w, reg_c,
                            );
                            if let Some((xs, es)) = soc {
                                if let Some(f_type) = self.acceptable(&xs, &es, theta, phi0, slope, alpha) {
                                    accepted = Some((xs, es, alpha, f_type));
                                    break;
                                }
                            }
                        }
                    }
                    first = false;
                    alpha *= 0.5;
                }
            }
            let Some((x_new, e_new, alpha, f_type)) = accepted else {
                failures += 1;
                if failures > 5 {
                    restorations += 1;
                    if restorations > MAX_RESTORATIONS {
                        return (SolveStatus::NumericFailure, Some("line search failed".into()));
                    }
                    match self.restore(&current) {
                        Some(e) => {
                            current = e;
                            failures = 0;
                            continue;
                        }
                        None => return (SolveStatus::NumericFailure, Some("line search failed".into())),
                    }
                }
                // a heavily regularized step approaches a feasibility step
                self.filter.clear();
                self.last_reg = self.last_reg.max(1e-4) * 100.0;
                continue;
            };
            if !f_type {
                self.filter.push(((1.0 - GAMMA_THETA) * theta, phi0 - GAMMA_PHI * theta));
            }
            failures = 0;

            let old_grad_lag = match self.hessian {
                Hessian::Bfgs(..) => Some(self.lagrangian_gradient_with(&grad, &jac, &y_plus)),
                _ => None,
            };
            for r in 0..self.m {
                self.y[r] += alpha * dy[r];
            }
            for i in 0..self.nx {
                if self.has_lower(i) {
                    let d = x_new[i] - self.xl[i];
                    let v = self.vl[i] + alpha_v * dvl[i];
                    self.vl[i] = v.clamp(self.mu / (KAPPA_SIGMA * d), KAPPA_SIGMA * self.mu / d);
                }
                if self.has_upper(i) {
                    let d = self.xu[i] - x_new[i];
                    let v = self.vu[i] + alpha_v * dvu[i];
                    self.vu[i] = v.clamp(self.mu / (KAPPA_SIGMA * d), KAPPA_SIGMA * self.mu / d);
                }
            }
            if let Some(g_old) = old_grad_lag {
                let (g, j) = self.derivatives(&x_new);
                let g_new = self.lagrangian_gradient_with(&g, &j, &y_plus);
                let s: Vec<f64> = (0..self.n).map(|i| x_new[i] - x[i]).collect();
                let yv: Vec<f64> = (0..self.n).map(|i| g_new[i] - g_old[i]).collect();
                if let Hessian::Bfgs(_, b) = &mut self.hessian {
                    damped_bfgs_update(b, self.n, &s, &yv);
                }
            }
            let rec = IterationRecord {
                iteration: self.iterations,
                barrier: self.mu,
                barrier_objective_before: phi0,
                barrier_objective_after: self.barrier(&x_new, e_new.f),
                violation_before: theta,
                violation_after: e_new.h.iter().map(|v| v.abs()).sum(),
                step: alpha,
                kkt_residual: e0,
                infeasibility: e_new.h.iter().fold(0.0f64, |a, v| a.max(v.abs())),
                regularization: reg_w,
            };
            self.log_line(&rec);
            self.log.push(rec);
            self.x = x_new;
            current = e_new;
            self.iterations += 1;
        }
    }

    /// Feasibility restoration: minimum-norm Newton steps on the constraint
    /// residual, weighted by the barrier diagonal so iterates stay interior.
    /// Succeeds once the violation has dropped far enough that the filter,
    /// augmented with the point restoration started from, accepts the result.
    fn restore(&mut self, current: &Eval) -> Option<Eval> {
        let l1 = |h: &[f64]| h.iter().map(|v| v.abs()).sum::<f64>();
        let theta0 = l1(&current.h);
        let phi0 = self.barrier(&self.x, current.f);
        self.filter.push(((1.0 - GAMMA_THETA) * theta0, phi0 - GAMMA_PHI * theta0));
        let hess = vec![0.0; self.hessian.pattern().len()];
        let mut x = self.x.clone();
        let mut e = current.clone();
        for _ in 0..RESTORATION_STEPS {
            let (_, jac) = self.derivatives(&x);
            let theta = l1(&e.h);
            let mut sigma = vec![0.0; self.nx];
            for i in 0..self.nx {
                if self.has_lower(i) {
                    sigma[i] += self.mu / (x[i] - self.xl[i]).powi(2);
                }
                if self.has_upper(i) {
                    sigma[i] += self.mu / (self.xu[i] - x[i]).powi(2);
                }
            }
            let mut rhs = vec![0.0; self.nx];
            rhs.extend(e.h.iter().map(|v| -v));
            let mut prox = self.mu.sqrt().max(1e-8);
            let mut reg_c = 0.0;
            let values = loop {
                let values = self.kkt_values(&hess, &sigma, &jac, prox, reg_c);
                if self.kkt.factor(&values) {
                    break values;
                }
                if reg_c == 0.0 {
                    reg_c = 1e-8;
                } else {
                    prox *= 100.0;
                }
                if prox > 1e20 {
                    return None;
                }
            };
            let sol = self.solve_refined(&values, &rhs);
            let dx = &sol[..self.nx];
            if !dx.iter().all(|v| v.is_finite()) {
                return None;
            }
            let mut alpha = self.fraction_to_boundary(&x, dx, 0.99);
            let step = loop {
                if alpha < 1e-10 {
                    return None;
                }
                let xt: Vec<f64> = x.iter().zip(dx).map(|(a, d)| a + alpha * d).collect();
                if let Some(et) = self.evaluate(&xt) {
                    if l1(&et.h) <= (1.0 - ARMIJO * alpha) * theta {
                        break (xt, et);
                    }
                }
                alpha *= 0.5;
            };
            (x, e) = step;
            let t = l1(&e.h);
            let p = self.barrier(&x, e.f);
            let dominated = self.filter.iter().any(|&(ft, fp)| t >= ft && p >= fp);
            if t <= 0.9 * theta0 && t <= self.theta_max && p.is_finite() && !dominated {
                self.x = x;
                // restart the duals from the barrier-centered values
                for i in 0..self.nx {
                    if self.has_lower(i) {
                        self.vl[i] = (self.mu / (self.x[i] - self.xl[i])).min(MAX_MULTIPLIER_GUESS);
                    }
                    if self.has_upper(i) {
                        self.vu[i] = (self.mu / (self.xu[i] - self.x[i])).min(MAX_MULTIPLIER_GUESS);
                    }
                }
                self.y.iter_mut().for_each(|v| *v = 0.0);
                self.last_reg = 0.0;
                log::debug!("restoration reduced violation {theta0:.3e} -> {t:.3e}");
                return Some(e);
            }
        }
        None
    }

    /// Moves variables whose bounds are clearly active exactly onto those
    /// bounds and re-solves the remaining equality system with Newton steps,
    /// as an active-set method would report. Keeps the barrier solution if
    /// the polished point is not a better KKT point.
    fn polish(&mut self) {
        let tol = self.opts.kkt_tolerance;
        let saved = (self.x.clone(), self.y.clone(), self.vl.clone(), self.vu.clone());
        let mut fixed = vec![0i8; self.nx];
        let mut x = self.x.clone();
        for i in 0..self.nx {
            let near = |gap: f64, bound: f64| gap <= 1e-4 * bound.abs().max(1.0);
            let dl = x[i] - self.xl[i];
            let du = self.xu[i] - x[i];
            if self.has_lower(i) && near(dl, self.bl[i]) && self.vl[i] > dl {
                fixed[i] = -1;
                x[i] = self.bl[i];
            } else if self.has_upper(i) && near(du, self.bu[i]) && self.vu[i] > du {
                fixed[i] = 1;
                x[i] = self.bu[i];
            }
        }
        if fixed.iter().all(|&f| f == 0) {
            return;
        }
        let mut y = self.y.clone();
        let mut changes = 0;
        for _ in 0..4 * MAX_POLISH_CHANGES {
            let Some(e) = self.evaluate(&x) else { break };
            let (grad, jac) = self.derivatives(&x);
            self.y = y.clone();
            let r = self.lagrangian_gradient_all(&grad, &jac, &y);
            let wrong_sign = |i: usize| match fixed[i] {
                -1 => (-r[i]).max(0.0),
                1 => r[i].max(0.0),
                _ => 0.0,
            };
            let dual = (0..self.nx).map(|i| if fixed[i] == 0 { r[i].abs() } else { 0.0 }).fold(0.0f64, f64::max);
            let feasible = constraint_violation(self.problem, &x[..self.n]) <= 0.1 * self.opts.feasibility_tolerance;
            if feasible && dual <= 0.1 * tol {
                let release = (0..self.nx)
                    .filter(|&i| wrong_sign(i) > 0.1 * tol)
                    .max_by(|&a, &b| wrong_sign(a).total_cmp(&wrong_sign(b)));
                let Some(release) = release else {
                    for i in 0..self.nx {
                        self.vl[i] = if fixed[i] == -1 { r[i] } else { 0.0 };
                        self.vu[i] = if fixed[i] == 1 { -r[i] } else { 0.0 };
                    }
                    self.x = x;
                    self.y = y;
                    return;
                };
                changes += 1;
                if changes > MAX_POLISH_CHANGES {
                    break;
                }
                fixed[release] = 0;
            }
            let hess = self.hessian_values(&x);
            // proximal diagonal keeps directions of zero curvature bounded
            let sigma: Vec<f64> = fixed.iter().map(|&f| if f != 0 { 1e12 } else { 1e-6 }).collect();
            let mut rhs: Vec<f64> = (0..self.nx).map(|i| if fixed[i] != 0 { 0.0 } else { -grad[i] }).collect();
            rhs.extend(e.h.iter().map(|v| -v));
            let mut reg = 0.0;
            let values = loop {
                let v = self.kkt_values(&hess, &sigma, &jac, reg, 0.0);
                if self.kkt.factor(&v) {
                    break Some(v);
                }
                reg = if reg == 0.0 { 1e-10 } else { reg * 100.0 };
                if reg > 1e-4 {
                    break None;
                }
            };
            let Some(values) = values else { break };
            let step = self.solve_refined(&values, &rhs);
            if step.iter().any(|v| !v.is_finite()) {
                break;
            }
            // ratio test: stop at the first bound and fix it
            let mut alpha: f64 = 1.0;
            let mut blocking = None;
            for i in (0..self.nx).filter(|&i| fixed[i] == 0) {
                let limit = if step[i] < 0.0 {
                    (self.bl[i] - x[i]) / step[i]
                } else if step[i] > 0.0 {
                    (self.bu[i] - x[i]) / step[i]
                } else {
                    f64::INFINITY
                };
                if limit < alpha {
                    alpha = limit.max(0.0);
                    blocking = Some(i);
                }
            }
            for i in (0..self.nx).filter(|&i| fixed[i] == 0) {
                x[i] += alpha * step[i];
            }
            for (yr, target) in y.iter_mut().zip(&step[self.nx..]) {
                *yr += alpha * (target - *yr);
            }
            if let Some(i) = blocking {
                fixed[i] = if step[i] < 0.0 { -1 } else { 1 };
                x[i] = if step[i] < 0.0 { self.bl[i] } else { self.bu[i] };
                changes += 1;
            }
            if changes > MAX_POLISH_CHANGES {
                break;
            }
        }
        (self.x, self.y, self.vl, self.vu) = saved;
    }

    /// `grad + A^T y` over all primal variables, slacks included.
    fn lagrangian_gradient_all(&self, grad: &[f64], jac: &[f64], y: &[f64]) -> Vec<f64> {
        let aty = self.jac_t(jac, y);
        grad.iter().zip(&aty).map(|(g, a)| g + a).collect()
    }

    fn lagrangian_gradient_with(&self, grad: &[f64], jac: &[f64], y: &[f64]) -> Vec<f64> {
        let aty = self.jac_t(jac, y);
        (0..self.n).map(|i| grad[i] + aty[i]).collect()
    }

    #[allow(clippy::too_many_arguments)]
    fn second_order_correction(
        &self,
        x: &[f64],
        current: &Eval,
        trial: &Eval,
        alpha: f64,
        grad_phi: &[f64],
        hess: &[f64],
        sigma: &[f64],
        jac: &[f64],
        reg_w: f64,
        reg_c: f64,
    ) -> Option<(Vec<f64>, Eval)> {
        let values = self.kkt_values(hess, sigma, jac, reg_w, reg_c);
        let mut rhs: Vec<f64> = grad_phi.iter().map(|v| -v).collect();
        rhs.extend(current.h.iter().zip(&trial.h).map(|(a, b)| -(alpha * a + b)));
        let sol = self.solve_refined(&values, &rhs);
        let dx = &sol[..self.nx];
        let tau = (1.0 - self.mu).max(0.99);
        let a = self.fraction_to_boundary(x, dx, tau);
        let xs: Vec<f64> = x.iter().zip(dx).map(|(v, d)| v + a * d).collect();
        self.evaluate(&xs).map(|e| (xs, e))
    }

    fn outcome(self, status: SolveStatus, message: Option<String>) -> SolveOutcome {
        let z = self.x[..self.n].to_vec();
        let multipliers = self.y.iter().zip(&self.row_scale).map(|(y, s)| y * s / self.obj_scale).collect();
        SolveOutcome {
            objective: self.problem.objective(&z),
            constraint_violation: constraint_violation(self.problem, &z),
            z,
            multipliers,
            status,
            kkt_residual: self.kkt_residual,
            iterations: self.iterations,
            log: self.log,
            message,
        }
    }
}

fn next_regularization(current: f64, last: f64) -> f64 {
    if current == 0.0 {
        if last == 0.0 {
            1e-4
        } else {
            (last / 3.0).max(1e-20)
        }
    } else if last == 0.0 {
        current * 100.0
    } else {
        current * 8.0
    }
}

fn push_inside(v: f64, lo: f64, hi: f64) -> f64 {
    let mut v = v;
    if lo.is_finite() && hi.is_finite() {
        let pl = (BOUND_PUSH * lo.abs().max(1.0)).min(BOUND_PUSH * (hi - lo));
        let pu = (BOUND_PUSH * hi.abs().max(1.0)).min(BOUND_PUSH * (hi - lo));
        v = v.clamp(lo + pl, hi - pu);
    } else if lo.is_finite() {
        v = v.max(lo + BOUND_PUSH * lo.abs().max(1.0));
    } else if hi.is_finite() {
        v = v.min(hi - BOUND_PUSH * hi.abs().max(1.0));
    }
    v
}

fn dense_lower(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|i| (0..=i).map(move |j| (i, j))).collect()
}

fn hess_mul(pattern: &[(usize, usize)], values: &[f64], d: &[f64], len: usize) -> Vec<f64> {
    let mut out = vec![0.0; len];
    for (&(i, j), &v) in pattern.iter().zip(values) {
        out[i] += v * d[j];
        if i != j {
            out[j] += v * d[i];
        }
    }
    out
}

/// Orders KKT unknowns so that each constraint row sits right after the last
/// primal variable it touches; variables coupled to many rows go last.
fn kkt_keys(n: usize, m: usize, nx: usize, pattern: &[(usize, usize)], row_slack: &[Option<usize>]) -> Vec<f64> {
    let mut col_count = vec![0usize; n];
    for &(_, c) in pattern {
        col_count[c] += 1;
    }
    let dense_limit = (m / 10).max(40);
    let end = (n + 1) as f64;
    let mut keys = vec![0.0; nx + m];
    for j in 0..n {
        keys[j] = if col_count[j] > dense_limit { end } else { j as f64 };
    }
    let mut row_key = vec![f64::NEG_INFINITY; m];
    for &(r, c) in pattern {
        if col_count[c] <= dense_limit {
            row_key[r] = row_key[r].max(c as f64);
        }
    }
    for r in 0..m {
        let k = if row_key[r].is_finite() { row_key[r] + 0.5 } else { end + 0.5 };
        keys[nx + r] = k;
        if let Some(s) = row_slack[r] {
            keys[s] = k - 0.25;
        }
    }
    keys
}

/// Powell-damped BFGS update of a dense symmetric matrix.
fn damped_bfgs_update(b: &mut [f64], n: usize, s: &[f64], y: &[f64]) {
    let bs: Vec<f64> = (0..n).map(|i| (0..n).map(|j| b[i * n + j] * s[j]).sum()).collect();
    let sbs: f64 = s.iter().zip(&bs).map(|(a, b)| a * b).sum();
    if sbs <= 1e-300 {
        return;
    }
    let sy: f64 = s.iter().zip(y).map(|(a, b)| a * b).sum();
    let theta = if sy >= 0.2 * sbs { 1.0 } else { 0.8 * sbs / (sbs - sy) };
    let r: Vec<f64> = (0..n).map(|i| theta * y[i] + (1.0 - theta) * bs[i]).collect();
    let sr: f64 = s.iter().zip(&r).map(|(a, b)| a * b).sum();
    if sr <= 1e-300 {
        return;
    }
    for i in 0..n {
        for j in 0..n {
            b[i * n + j] += -bs[i] * bs[j] / sbs + r[i] * r[j] / sr;
        }
    }
}
