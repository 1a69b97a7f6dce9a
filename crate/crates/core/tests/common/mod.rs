//! Helpers shared by the integration tests.
#![allow(dead_code)]

use std::collections::HashSet;

use lgr_ocp::nlp::NlpProblem;

/// Dense central-difference Jacobian ignoring the declared pattern.
pub fn dense_jacobian(problem: &dyn NlpProblem, z: &[f64], h: f64) -> Vec<Vec<f64>> {
    let m = problem.num_constraints();
    let mut jac = vec![vec![0.0; z.len()]; m];
    let (mut cp, mut cm) = (vec![0.0; m], vec![0.0; m]);
    let mut zz = z.to_vec();
    for j in 0..z.len() {
        let step = h * (1.0 + z[j].abs());
        zz[j] = z[j] + step;
        problem.constraints(&zz, &mut cp);
        zz[j] = z[j] - step;
        problem.constraints(&zz, &mut cm);
        zz[j] = z[j];
        for i in 0..m {
            jac[i][j] = (cp[i] - cm[i]) / (2.0 * step);
        }
    }
    jac
}

/// Entries larger than `tol` in the dense Jacobian that the declared
/// pattern leaves out.
pub fn undeclared_nonzeros(problem: &dyn NlpProblem, z: &[f64], tol: f64) -> Vec<(usize, usize)> {
    let declared: HashSet<(usize, usize)> = problem.jacobian_pattern().into_iter().collect();
    let dense = dense_jacobian(problem, z, 1e-6);
    let mut missing = Vec::new();
    for (i, row) in dense.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            if v.abs() > tol && !declared.contains(&(i, j)) {
                missing.push((i, j));
            }
        }
    }
    missing
}

use lgr_ocp::problem::{Mesh, OcpDefinition};
use lgr_ocp::transcription::{CollocationSolution, DecisionLayout};

/// Solution whose states and controls are sampled from closures of `tau`.
pub fn sampled_solution<X, U>(ocp: &OcpDefinition, mesh: &Mesh, state: X, control: U) -> CollocationSolution
where
    X: Fn(f64) -> Vec<f64>,
    U: Fn(f64) -> Vec<f64>,
{
    let layout = DecisionLayout::new(ocp, mesh);
    let mut z = vec![0.0; layout.dim];
    for k in 0..mesh.num_intervals() {
        let g = lgr_ocp::basis::make_grid(mesh.count(k)).unwrap();
        let map = mesh.interval(k);
        for (j, &s) in g.support().iter().enumerate() {
            let tau = map.to_tau(s);
            let p = layout.point(k, j);
            let o = layout.state_offset(p);
            z[o..o + ocp.n_x].copy_from_slice(&state(tau));
            if j < g.len() {
                let o = layout.control_offset(p);
                z[o..o + ocp.n_u].copy_from_slice(&control(tau));
            }
        }
    }
    if let Some(i) = layout.tf_index {
        z[i] = ocp.tf.guess();
    }
    layout.unpack(ocp, mesh, &z).unwrap()
}
