//! Interval simulations, merged simulations and the embedded pairs.

mod common;

use approx::assert_abs_diff_eq;
use common::sampled_solution;
use lgr_ocp::nlp::{InteriorPoint, NlpSolver, SolveStatus, SolverOptions};
use lgr_ocp::ode::{
    control_interpolant, integrate, simulate_ivp, simulate_merged_ivp, simulate_merged_tvp, simulate_tvp, single_step,
    Direction, IntegratorSpec, Method, SimStatus,
};
use lgr_ocp::problem::{hyper_sensitive, Mesh, OcpDefinition, TimeSpec};
use lgr_ocp::transcription::{assemble, initial_guess};

fn spec(method: Method, tolerance: f64) -> IntegratorSpec {
    IntegratorSpec { method, tolerance, ..IntegratorSpec::default() }
}

/// `x' = rate * x` on `t in [0, 1]`.
fn linear(rate: f64) -> OcpDefinition {
    OcpDefinition::new("linear", 1, 1, move |x, _, _| vec![rate * x[0]])
        .with_times(TimeSpec::Fixed(0.0), TimeSpec::Fixed(1.0))
}

/// `x' = u` on `t in [0, 2]`.
fn integrator() -> OcpDefinition {
    OcpDefinition::new("integrator", 1, 1, |_, u, _| vec![u[0]]).with_times(TimeSpec::Fixed(0.0), TimeSpec::Fixed(2.0))
}

const METHODS: [Method; 2] = [Method::Dp54, Method::V98];

#[test]
fn still_dynamics_stay_constant() {
    let ocp = OcpDefinition::new("still", 2, 1, |_, _, _| vec![0.0, 0.0]);
    let mesh = Mesh::uniform(3, 4).unwrap();
    let sol = sampled_solution(&ocp, &mesh, |_| vec![2.5, -7.0], |_| vec![0.3]);
    for m in METHODS {
        for k in 0..3 {
            for traj in [
                simulate_ivp(&ocp, &sol, k, &spec(m, 1e-6)).unwrap(),
                simulate_tvp(&ocp, &sol, k, &spec(m, 1e-6)).unwrap(),
            ] {
                assert!(traj.is_ok());
                assert!(traj.states.iter().all(|x| x == &[2.5, -7.0]));
            }
        }
        let merged = simulate_merged_tvp(&ocp, &sol, 2, &spec(m, 1e-6)).unwrap();
        assert!(merged.points.iter().any(|&z| z < -1.0));
        assert!(merged.states.iter().all(|x| x == &[2.5, -7.0]));
    }
}

#[test]
fn decay_reaches_inverse_e() {
    let ocp = linear(-1.0);
    let mesh = Mesh::uniform(1, 4).unwrap();
    let sol = sampled_solution(&ocp, &mesh, |_| vec![1.0], |_| vec![0.0]);
    assert_eq!(sol.time_scale() * mesh.interval(0).scale(), 0.5);
    for m in METHODS {
        for tol in [1e-6, 1e-8, 1e-10] {
            let traj = simulate_ivp(&ocp, &sol, 0, &spec(m, tol)).unwrap();
            assert_eq!(traj.direction, Direction::Forward);
            assert_eq!(*traj.points.last().unwrap(), 1.0);
            assert!((traj.last_state()[0] - (-1.0f64).exp()).abs() <= 100.0 * tol, "{m:?} {tol}");
        }
    }
}

#[test]
fn growth_backward_returns_to_one() {
    let ocp = linear(1.0);
    let mesh = Mesh::uniform(1, 4).unwrap();
    let e = std::f64::consts::E;
    let sol = sampled_solution(&ocp, &mesh, |tau| vec![if tau == 1.0 { e } else { 1.0 }], |_| vec![0.0]);
    for m in METHODS {
        let traj = simulate_tvp(&ocp, &sol, 0, &spec(m, 1e-8)).unwrap();
        assert_eq!(traj.direction, Direction::Backward);
        assert_eq!(traj.points[0], 1.0);
        assert_eq!(*traj.points.last().unwrap(), -1.0);
        assert!(traj.points.windows(2).all(|w| w[0] > w[1]));
        assert!((traj.last_state()[0] - 1.0).abs() <= 100.0 * 1e-8);
    }
}

#[test]
fn propagation_points_include_collocation_points() {
    let ocp = linear(-0.3);
    let mesh = Mesh::uniform(2, 5).unwrap();
    let sol = sampled_solution(&ocp, &mesh, |_| vec![1.0], |_| vec![0.0]);
    let traj = simulate_ivp(&ocp, &sol, 1, &spec(Method::Dp54, 1e-6)).unwrap();
    for &z in sol.grid(1).points() {
        assert!(traj.points.contains(&z), "{z}");
    }
    assert!(traj.points.windows(2).all(|w| w[0] < w[1]));
    let traj = simulate_tvp(&ocp, &sol, 1, &spec(Method::Dp54, 1e-6)).unwrap();
    for &z in sol.grid(1).points() {
        assert!(traj.points.contains(&z), "{z}");
    }
}

#[test]
fn control_interpolant_examples() {
    let ocp = integrator();
    let mesh = Mesh::uniform(1, 2).unwrap();
    // u(tau) = 0.75 * (tau + 1) is 0 at -1 and 1 at 1/3
    let sol = sampled_solution(&ocp, &mesh, |_| vec![0.0], |tau| vec![0.75 * (tau + 1.0)]);
    let u = control_interpolant(&sol, 0).unwrap();
    assert_eq!(u.nodes().len(), 2);
    assert_abs_diff_eq!(u.eval(1.0)[0], 1.5, epsilon = 1e-14);

    let mesh = Mesh::uniform(2, 5).unwrap();
    let sol = sampled_solution(&ocp, &mesh, |_| vec![0.0], |_| vec![-0.4]);
    let u = control_interpolant(&sol, 1).unwrap();
    for z in [-1.0, 0.0, 1.0, 1.5, 3.0] {
        assert_abs_diff_eq!(u.eval(z)[0], -0.4, epsilon = 1e-12);
    }
    let sol = sampled_solution(&ocp, &mesh, |_| vec![0.0], |tau| vec![tau.sin()]);
    let u = control_interpolant(&sol, 0).unwrap();
    for (z, v) in sol.grid(0).points().iter().zip(&sol.controls[0]) {
        assert_eq!(u.eval(*z), *v);
    }
    assert!(control_interpolant(&sol, 2).is_err());
}

#[test]
fn merged_simulation_of_equal_intervals_ends_at_three() {
    let ocp = integrator();
    let mesh = Mesh::new(vec![-1.0, -0.2, 0.6, 1.0], vec![3, 4, 2]).unwrap();
    let sol = sampled_solution(&ocp, &mesh, |tau| vec![0.7 * tau], |_| vec![0.7]);
    let fwd = simulate_merged_ivp(&ocp, &sol, 0, &spec(Method::Dp54, 1e-8)).unwrap();
    assert_abs_diff_eq!(*fwd.points.last().unwrap(), 3.0, epsilon = 1e-12);
    // x' = u = 0.7 in t; local scale alpha * beta = 0.4
    let expected = sol.states[1].last().unwrap()[0];
    assert!((fwd.last_state()[0] - expected).abs() <= 1e-8 * 100.0);

    let bwd = simulate_merged_tvp(&ocp, &sol, 1, &spec(Method::V98, 1e-8)).unwrap();
    assert_abs_diff_eq!(*bwd.points.last().unwrap(), -3.0, epsilon = 1e-12);
    assert!((bwd.last_state()[0] - sol.states[0][0][0]).abs() <= 1e-6);

    // unequal widths: [0.6, 1] extended into [-0.2, 0.6] reaches -5
    let bwd = simulate_merged_tvp(&ocp, &sol, 2, &spec(Method::Dp54, 1e-8)).unwrap();
    assert_abs_diff_eq!(*bwd.points.last().unwrap(), -5.0, epsilon = 1e-12);
    assert!(simulate_merged_tvp(&ocp, &sol, 0, &spec(Method::Dp54, 1e-8)).is_err());
    assert!(simulate_merged_ivp(&ocp, &sol, 2, &spec(Method::Dp54, 1e-8)).is_err());
}

#[test]
fn contractive_round_trip() {
    let ocp = linear(-2.0);
    let mesh = Mesh::uniform(1, 3).unwrap();
    for m in METHODS {
        let tol = 1e-8;
        let sol = sampled_solution(&ocp, &mesh, |_| vec![1.0], |_| vec![0.0]);
        let fwd = simulate_ivp(&ocp, &sol, 0, &spec(m, tol)).unwrap();
        let end = fwd.last_state()[0];
        let sol = sampled_solution(&ocp, &mesh, |tau| vec![if tau == 1.0 { end } else { 1.0 }], |_| vec![0.0]);
        let bwd = simulate_tvp(&ocp, &sol, 0, &spec(m, tol)).unwrap();
        assert!((bwd.last_state()[0] - 1.0).abs() <= 100.0 * tol, "{m:?}");
    }
}

// Backward simulation fails where the state is of order one: reversed, the
// cubic term blows up over the long horizon. Cruise intervals, whose states
// are already negligible, integrate backward without trouble.
#[test]
fn hyper_sensitive_cruise() {
    let ocp = hyper_sensitive(10_000.0);
    let mesh = Mesh::uniform(10, 3).unwrap();
    let (nlp, _) = assemble(&ocp, &mesh).unwrap();
    let out = InteriorPoint::new(SolverOptions::default()).solve(&nlp, &initial_guess(&ocp, &mesh));
    assert_eq!(out.status, SolveStatus::Optimal);
    let sol = nlp.extract(&out.z).unwrap();
    let s = spec(Method::V98, 1e-6);
    for k in 2..8 {
        let fwd = simulate_ivp(&ocp, &sol, k, &s).unwrap();
        assert!(fwd.is_ok());
        assert!(fwd.states.iter().all(|x| x[0].abs() < 1e-6), "interval {k}");
    }
    for k in [0, 9] {
        let bwd = simulate_tvp(&ocp, &sol, k, &s).unwrap();
        assert_eq!(bwd.status, SimStatus::Failed, "interval {k}");
        let at = bwd.failure_location.unwrap();
        assert!((-1.0..=1.0).contains(&at));
        assert!(simulate_ivp(&ocp, &sol, k, &s).unwrap().is_ok());
    }
}

#[test]
fn blowup_is_reported_not_panicked() {
    let ocp = OcpDefinition::new("cubic", 1, 1, |x, _, _| vec![x[0].powi(3)])
        .with_times(TimeSpec::Fixed(0.0), TimeSpec::Fixed(10.0));
    let mesh = Mesh::uniform(1, 2).unwrap();
    let sol = sampled_solution(&ocp, &mesh, |_| vec![1.0], |_| vec![0.0]);
    let traj = simulate_ivp(&ocp, &sol, 0, &spec(Method::Dp54, 1e-6)).unwrap();
    assert_eq!(traj.status, SimStatus::Failed);
    assert!(traj.failure_location.unwrap() < 1.0);
    assert!(traj.states.iter().all(|x| x[0].is_finite()));
}

#[test]
fn requested_outputs_are_hit_exactly() {
    let outs = [0.1, 0.37, 0.9];
    let res = integrate(|_, y| vec![-y[0]], 0.0, 1.0, &[1.0], &outs, &spec(Method::V98, 1e-6));
    for o in outs {
        let i = res.points.iter().position(|&p| p == o).unwrap();
        assert!((res.states[i][0] - (-o).exp()).abs() < 1e-6);
    }
    assert_eq!(*res.points.last().unwrap(), 1.0);
}

/// Global error of `steps` fixed steps of `y' = -y` over `[0, span]`.
fn fixed_step_error(method: Method, span: f64, steps: usize) -> f64 {
    let h = span / steps as f64;
    let mut y = vec![1.0];
    for i in 0..steps {
        y = single_step(method, |_, y: &[f64]| vec![-y[0]], i as f64 * h, &y, h).0;
    }
    (y[0] - (-span).exp()).abs()
}

#[test]
fn observed_orders() {
    for (method, order, span, steps) in [(Method::Dp54, 5.0, 4.0, 8), (Method::V98, 9.0, 16.0, 16)] {
        let coarse = fixed_step_error(method, span, steps);
        let fine = fixed_step_error(method, span, 2 * steps);
        let observed = (coarse / fine).log2();
        assert!(observed > order - 1.0 && observed < order + 1.0, "{method:?}: {observed}");
        let ratio = coarse / fine / 2f64.powf(order);
        assert!((0.5..=2.0).contains(&ratio), "{method:?}: ratio {ratio}");
    }
}
