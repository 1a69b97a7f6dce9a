//! Problem data, time maps and the benchmark problems.

use std::f64::consts::PI;

use approx::assert_abs_diff_eq;
use lgr_ocp::problem::{
    hyper_sensitive, left_to_right, right_to_left, robot_arm, robot_arm_inertia, supersonic_climb, t_to_tau, tau_to_t,
    tau_to_zeta, zeta_to_tau, AeroModel, Mesh, OcpDefinition, ROBOT_ARM_LENGTH,
};
use lgr_ocp::Error;
use proptest::prelude::*;

#[test]
fn time_map_endpoints_and_midpoint() {
    assert_eq!(tau_to_t(-1.0, 3.0, 8.0).unwrap(), 3.0);
    assert_eq!(tau_to_t(1.0, 3.0, 8.0).unwrap(), 8.0);
    assert_eq!(tau_to_t(0.0, 0.0, 10_000.0).unwrap(), 5000.0);
    assert!(matches!(tau_to_t(0.0, 2.0, 2.0), Err(Error::InvalidInterval(_))));
    assert!(t_to_tau(0.0, 3.0, 1.0).is_err());
}

#[test]
fn interval_map_endpoints_and_midpoint() {
    assert_abs_diff_eq!(zeta_to_tau(-1.0, -0.3, 0.5).unwrap(), -0.3, epsilon = 1e-15);
    assert_abs_diff_eq!(zeta_to_tau(1.0, -0.3, 0.5).unwrap(), 0.5, epsilon = 1e-15);
    assert_abs_diff_eq!(zeta_to_tau(0.0, 0.0, 0.4).unwrap(), 0.2, epsilon = 1e-16);
    assert!(zeta_to_tau(0.0, 0.4, 0.4).is_err());
}

#[test]
fn adjacent_interval_maps() {
    assert_abs_diff_eq!(left_to_right(1.0, 0.0, 0.2, 0.4).unwrap(), -1.0, epsilon = 1e-15);
    assert_abs_diff_eq!(right_to_left(-1.0, 0.0, 0.2, 0.4).unwrap(), 1.0, epsilon = 1e-15);
    assert_abs_diff_eq!(left_to_right(0.0, 0.0, 0.2, 0.4).unwrap(), -2.0, epsilon = 1e-14);
    // the interval ending at +1 extends to +3 in its own coordinate
    assert_abs_diff_eq!(right_to_left(1.0, 0.0, 0.2, 0.4).unwrap(), 3.0, epsilon = 1e-14);
    assert!(left_to_right(0.0, 0.0, 0.4, 0.2).is_err());
}

#[test]
fn mesh_validation() {
    assert!(Mesh::new(vec![-1.0, 0.0, 1.0], vec![3, 3]).is_ok());
    assert!(Mesh::new(vec![-1.0, 0.0, 1.0], vec![3]).is_err());
    assert!(Mesh::new(vec![-1.0, 0.5, 0.2, 1.0], vec![3, 3, 3]).is_err());
    assert!(Mesh::new(vec![-0.9, 1.0], vec![3]).is_err());
    assert!(Mesh::new(vec![-1.0, 1.0], vec![0]).is_err());
    let m = Mesh::uniform(10, 4).unwrap();
    assert_eq!(m.points().len(), 11);
    assert_eq!(m.total_points(), 40);
    assert_eq!(m.locate(-1.0), 0);
    assert_eq!(m.locate(1.0), 9);
    assert_eq!(m.locate(m.points()[3]), 3);
}

#[test]
fn robot_arm_examples() {
    let p = robot_arm();
    assert_eq!((p.n_x, p.n_u), (6, 3));
    let f = p.dynamics(&[4.5, 0.0, PI / 4.0, 0.0, 0.0, 0.0], &[1.0, 0.0, 0.0], 0.0);
    assert_abs_diff_eq!(f[3], 0.2, epsilon = 1e-15);
    assert_abs_diff_eq!(robot_arm_inertia(4.5), 30.416_666_7, epsilon = 1e-7);
    assert_eq!(p.control_bounds, vec![(-1.0, 1.0); 3]);
    assert!(p.tf.is_free());
    assert_eq!(p.mayer(&[0.0; 6], 0.0, &[0.0; 6], 9.0), 9.0);
}

#[test]
fn hyper_sensitive_examples() {
    let p = hyper_sensitive(10_000.0);
    assert_abs_diff_eq!(p.dynamics(&[1.5], &[0.0], 0.0)[0], -3.375, epsilon = 1e-15);
    assert_abs_diff_eq!(p.lagrange(&[1.0], &[2.0], 0.0), 2.5, epsilon = 1e-15);
    assert_eq!(p.tf.bounds(), (10_000.0, 10_000.0));
}

#[test]
fn boundary_rows_vanish_at_benchmark_targets() {
    let arm = robot_arm();
    let x0 = [4.5, 0.0, PI / 4.0, 0.0, 0.0, 0.0];
    let xf = [4.5, 2.0 * PI / 3.0, PI / 4.0, 0.0, 0.0, 0.0];
    assert!(arm.boundary(&x0, 0.0, &xf, 9.0).iter().all(|&v| v == 0.0));
    assert_eq!(arm.n_boundary(), 12);

    let hs = hyper_sensitive(10_000.0);
    assert_eq!(hs.boundary(&[1.5], 0.0, &[1.0], 10_000.0), vec![0.0, 0.0]);

    let climb = supersonic_climb(AeroModel::new(|_, _| 1.0, |_, _| 0.5, 1.0, 1.0));
    let b = climb.boundary(&[0.0, 0.12931, 0.0], 0.0, &[19.995, 0.29509, 0.0], 100.0);
    assert!(b.iter().all(|&v| v == 0.0));
    assert!(climb.boundary(&[0.0, 0.2, 0.0], 0.0, &[19.995, 0.29509, 0.0], 100.0)[1] != 0.0);
}

#[test]
fn climb_uses_the_supplied_aero_model() {
    let p = supersonic_climb(AeroModel::new(|h, _| 2.0 + h, |_, v| v, 2.0, 1.0));
    let f = p.dynamics(&[1.0, 0.5, 0.0], &[1.0], 0.0);
    assert_abs_diff_eq!(f[0], 0.0, epsilon = 1e-15);
    assert_abs_diff_eq!(f[1], (3.0 - 0.5) / 2.0, epsilon = 1e-15);
    assert_abs_diff_eq!(f[2], 0.0, epsilon = 1e-15);
    assert_eq!(p.state_bounds[2], (0.0, PI / 2.0));
}

#[test]
fn callback_dimension_mismatch_names_the_callback() {
    let p = OcpDefinition::new("bad", 2, 1, |_, _, _| vec![0.0]);
    match p.validate(&[0.0, 0.0], &[0.0]) {
        Err(Error::CallbackDimension { callback, expected, got }) => {
            assert_eq!((callback, expected, got), ("dynamics", 2, 1));
        }
        other => panic!("unexpected {other:?}"),
    }
}

proptest! {
    #[test]
    fn time_maps_round_trip(t0 in -100.0f64..100.0, len in 1e-3f64..1e4, tau in -1.0f64..1.0) {
        let tf = t0 + len;
        let t = tau_to_t(tau, t0, tf).unwrap();
        prop_assert!((t_to_tau(t, t0, tf).unwrap() - tau).abs() < 1e-13 * (1.0 + t0.abs() / len));
    }

    #[test]
    fn adjacent_maps_round_trip(
        a in -1.0f64..0.0,
        w1 in 1e-3f64..1.0,
        w2 in 1e-3f64..1.0,
        zeta in -3.0f64..3.0,
    ) {
        let (b, c) = (a + w1, a + w1 + w2);
        let there = left_to_right(zeta, a, b, c).unwrap();
        let back = right_to_left(there, a, b, c).unwrap();
        let scale = 1.0 + (w2 / w1).max(w1 / w2);
        prop_assert!((back - zeta).abs() < 1e-13 * scale * (1.0 + zeta.abs()));
        let t = zeta_to_tau(zeta, a, b).unwrap();
        prop_assert!((tau_to_zeta(t, a, b).unwrap() - zeta).abs() < 1e-13 * (1.0 + zeta.abs()) * (1.0 + 1.0 / w1));
    }

    #[test]
    fn arm_inertia_is_symmetric(rho in 0.0f64..ROBOT_ARM_LENGTH) {
        let a = robot_arm_inertia(rho);
        let b = robot_arm_inertia(ROBOT_ARM_LENGTH - rho);
        prop_assert!((a - b).abs() <= 1e-12 * a);
    }
}
