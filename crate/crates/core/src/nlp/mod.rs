//! Nonlinear programming: problem interface, finite-difference derivatives
//! and a primal-dual interior-point solver.

mod fd;
mod ipm;
mod linalg;

pub use fd::{color_columns, fd_gradient, fd_jacobian, SparseMatrix};
pub use ipm::InteriorPoint;
pub use linalg::{BandedLu, BorderedSolver};

use serde::{Deserialize, Serialize};

/// A smooth NLP: minimize `f(z)` subject to `cl <= c(z) <= cu`, `zl <= z <= zu`.
///
/// Equal constraint bounds denote equality rows. Only the sparsity of the
/// constraint Jacobian is required; derivatives default to finite differences.
pub trait NlpProblem: Sync {
    fn num_variables(&self) -> usize;
    fn num_constraints(&self) -> usize;
    fn variable_bounds(&self) -> (Vec<f64>, Vec<f64>);
    fn constraint_bounds(&self) -> (Vec<f64>, Vec<f64>);
    fn objective(&self, z: &[f64]) -> f64;
    fn constraints(&self, z: &[f64], out: &mut [f64]);

    /// Structurally nonzero `(row, column)` entries of the constraint Jacobian.
    fn jacobian_pattern(&self) -> Vec<(usize, usize)>;

    /// Objective gradient; central differences by default.
    fn objective_gradient(&self, z: &[f64], grad: &mut [f64]) {
        fd_gradient(self, z, DEFAULT_FD_STEP, grad);
    }

    /// Lower-triangle `(row, col)` entries (row >= col) of the Lagrangian
    /// Hessian, if the problem can evaluate it.
    fn hessian_pattern(&self) -> Option<Vec<(usize, usize)>> {
        None
    }

    /// Fills `values` (ordered like [`NlpProblem::hessian_pattern`]) with the
    /// Hessian of `obj_factor * f + sum(multipliers[i] * c_i)`. Returns false
    /// when not provided.
    fn lagrangian_hessian(&self, _z: &[f64], _obj_factor: f64, _multipliers: &[f64], _values: &mut [f64]) -> bool {
        false
    }
}

/// Relative step for central differences, close to the cube root of machine epsilon.
pub const DEFAULT_FD_STEP: f64 = 6.0e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    MaxIterations,
    Infeasible,
    NumericFailure,
}

/// How the solver obtains second derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HessianMode {
    /// The problem's own Hessian when available, else differences of gradients.
    Exact,
    /// Powell-damped BFGS approximation.
    DampedBfgs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub kkt_tolerance: f64,
    pub feasibility_tolerance: f64,
    pub max_iterations: usize,
    pub fd_step: f64,
    pub hessian: HessianMode,
    pub initial_barrier: f64,
    pub verbose: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            kkt_tolerance: 1e-8,
            feasibility_tolerance: 1e-8,
            max_iterations: 500,
            fd_step: DEFAULT_FD_STEP,
            hessian: HessianMode::Exact,
            initial_barrier: 0.1,
            verbose: false,
        }
    }
}

/// One accepted iteration of the solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub barrier: f64,
    /// Barrier objective before and after the step.
    pub barrier_objective_before: f64,
    pub barrier_objective_after: f64,
    /// l1 norm of the scaled constraint residuals before and after the step.
    pub violation_before: f64,
    pub violation_after: f64,
    pub step: f64,
    pub kkt_residual: f64,
    pub infeasibility: f64,
    pub regularization: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutcome {
    pub z: Vec<f64>,
    pub multipliers: Vec<f64>,
    pub status: SolveStatus,
    pub objective: f64,
    pub kkt_residual: f64,
    pub constraint_violation: f64,
    pub iterations: usize,
    pub log: Vec<IterationRecord>,
    pub message: Option<String>,
}

/// Anything able to solve an [`NlpProblem`] from a starting point.
pub trait NlpSolver: Sync {
    fn solve(&self, problem: &dyn NlpProblem, guess: &[f64]) -> SolveOutcome;

    /// Tolerances the solver works to.
    fn options(&self) -> &SolverOptions;
}

/// Largest violation of the variable and constraint bounds at `z`.
pub fn constraint_violation(problem: &dyn NlpProblem, z: &[f64]) -> f64 {
    let (zl, zu) = problem.variable_bounds();
    let (cl, cu) = problem.constraint_bounds();
    let mut c = vec![0.0; problem.num_constraints()];
    problem.constraints(z, &mut c);
    let box_viol = |v: f64, lo: f64, hi: f64| (lo - v).max(v - hi).max(0.0);
    let a = z.iter().zip(zl.iter().zip(&zu)).map(|(v, (lo, hi))| box_viol(*v, *lo, *hi));
    let b = c
        .iter()
        .zip(cl.iter().zip(&cu))
        .map(|(v, (lo, hi))| if v.is_finite() { box_viol(*v, *lo, *hi) } else { f64::INFINITY });
    a.chain(b).fold(0.0, f64::max)
}
