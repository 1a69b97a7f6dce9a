//! Collocation grid, quadrature, differentiation and interpolation.

use approx::assert_relative_eq;
use lgr_ocp::basis::{differentiate, interpolate, make_grid, CollocationGrid, Interpolant};
use lgr_ocp::Error;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn monomial_integral(d: i32) -> f64 {
    if d % 2 == 1 {
        0.0
    } else {
        2.0 / (d + 1) as f64
    }
}

#[test]
fn single_point_grid() {
    let g = make_grid(1).unwrap();
    assert_eq!(g.points(), &[-1.0]);
    assert_eq!(g.support(), &[-1.0, 1.0]);
    assert_relative_eq!(g.weights()[0], 2.0, epsilon = 1e-15);
    assert_relative_eq!(g.diff(0, 0), -0.5, epsilon = 1e-15);
    assert_relative_eq!(g.diff(0, 1), 0.5, epsilon = 1e-15);
}

#[test]
fn two_point_grid() {
    let g = make_grid(2).unwrap();
    assert_relative_eq!(g.points()[0], -1.0, epsilon = 1e-15);
    assert_relative_eq!(g.points()[1], 1.0 / 3.0, epsilon = 1e-15);
    assert_relative_eq!(g.weights()[0], 0.5, epsilon = 1e-14);
    assert_relative_eq!(g.weights()[1], 1.5, epsilon = 1e-14);
}

#[test]
fn empty_grid_is_rejected() {
    assert_eq!(make_grid(0).unwrap_err(), Error::InvalidGridSize(0));
}

#[test]
fn grid_structure() {
    for n in 1..=40 {
        let g = make_grid(n).unwrap();
        assert_eq!(g.len(), n);
        assert_eq!(g.points()[0], -1.0);
        assert!(g.points().windows(2).all(|w| w[0] < w[1]), "n = {n}");
        assert!(g.points().iter().all(|&p| p < 1.0));
        assert_eq!(g.support().len(), n + 1);
        assert_eq!(*g.support().last().unwrap(), 1.0);
        assert!(g.weights().iter().all(|&w| w > 0.0));
        assert!((g.weights().iter().sum::<f64>() - 2.0).abs() < 1e-13, "n = {n}");
    }
}

#[test]
fn quadrature_is_exact_to_degree_2n_minus_2() {
    for n in 1..=12 {
        let g = make_grid(n).unwrap();
        for d in 0..=(2 * n as i32 - 2) {
            let q: f64 = g.points().iter().zip(g.weights()).map(|(x, w)| w * x.powi(d)).sum();
            assert!((q - monomial_integral(d)).abs() < 1e-11, "n = {n}, degree {d}: {q}");
        }
    }
}

// Independent route to the weights: the moment system for small grids.
#[test]
fn weights_match_moment_system() {
    for n in 1..=6 {
        let g = make_grid(n).unwrap();
        let v = DMatrix::from_fn(n, n, |d, j| g.points()[j].powi(d as i32));
        let m = DVector::from_fn(n, |d, _| monomial_integral(d as i32));
        let w = v.lu().solve(&m).unwrap();
        for j in 0..n {
            assert_relative_eq!(w[j], g.weights()[j], epsilon = 1e-12);
        }
    }
}

#[test]
fn differentiation_is_exact_to_degree_n() {
    for n in 1..=12 {
        let g = make_grid(n).unwrap();
        for d in 0..=n as i32 {
            let values = vec![g.support().iter().map(|x| x.powi(d)).collect::<Vec<_>>()];
            let deriv = differentiate(&g, &values).unwrap();
            for (i, &x) in g.points().iter().enumerate() {
                let exact = if d == 0 { 0.0 } else { d as f64 * x.powi(d - 1) };
                assert!((deriv[0][i] - exact).abs() < 1e-10, "n = {n}, degree {d}, row {i}");
            }
        }
    }
}

#[test]
fn differentiation_rows_sum_to_zero() {
    for n in 1..=12 {
        let g = make_grid(n).unwrap();
        for i in 0..n {
            assert!(g.diff_row(i).iter().sum::<f64>().abs() < 1e-12, "n = {n}, row {i}");
        }
    }
}

#[test]
fn differentiate_checks_lengths() {
    let g = make_grid(3).unwrap();
    let err = differentiate(&g, &[vec![0.0; 3]]).unwrap_err();
    assert_eq!(err, Error::LengthMismatch { expected: 4, got: 3 });
}

#[test]
fn linear_interpolation_through_two_radau_points() {
    let p = Interpolant::new(vec![-1.0, 1.0 / 3.0], vec![vec![0.0], vec![4.0 / 3.0]]).unwrap();
    assert_relative_eq!(interpolate(&p, 0.0)[0], 1.0, epsilon = 1e-15);
    assert_eq!(interpolate(&p, 1.0 / 3.0)[0], 4.0 / 3.0);
}

#[test]
fn duplicate_nodes_are_rejected() {
    let err = Interpolant::new(vec![0.0, 0.0], vec![vec![1.0], vec![2.0]]).unwrap_err();
    assert_eq!(err, Error::DuplicateNodes);
}

#[test]
fn runge_function_matches_vandermonde_oracle() {
    let g = CollocationGrid::new(10).unwrap();
    let nodes = g.points().to_vec();
    let f = |x: f64| 1.0 / (1.0 + 25.0 * x * x);
    let p = Interpolant::new(nodes.clone(), nodes.iter().map(|&x| vec![f(x)]).collect()).unwrap();

    let n = nodes.len();
    let v = DMatrix::from_fn(n, n, |i, j| nodes[i].powi(j as i32));
    let rhs = DVector::from_fn(n, |i, _| f(nodes[i]));
    let c = v.lu().solve(&rhs).unwrap();
    let oracle: f64 = (0..n).map(|j| c[j] * 0.9f64.powi(j as i32)).sum();

    assert_relative_eq!(p.eval(0.9)[0], oracle, max_relative = 1e-9);
}

#[test]
fn extrapolation_follows_the_polynomial() {
    // x^2 - x through three nodes, evaluated well outside them
    let nodes = vec![-1.0, 0.0, 0.5];
    let p = Interpolant::new(nodes.clone(), nodes.iter().map(|&x| vec![x * x - x]).collect()).unwrap();
    assert_relative_eq!(p.eval(3.0)[0], 6.0, epsilon = 1e-12);
    assert_relative_eq!(p.eval(-2.5)[0], 8.75, epsilon = 1e-12);
}

fn distinct_nodes() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::btree_set(-1000i32..1000, 1..8).prop_map(|s| s.into_iter().map(|v| v as f64 / 500.0).collect())
}

proptest! {
    #[test]
    fn interpolant_reproduces_nodal_values(
        nodes in distinct_nodes(),
        seed in prop::collection::vec(-10.0f64..10.0, 8),
    ) {
        let values: Vec<Vec<f64>> = nodes.iter().enumerate().map(|(j, _)| vec![seed[j], -seed[j]]).collect();
        let p = Interpolant::new(nodes.clone(), values.clone()).unwrap();
        for (x, v) in nodes.iter().zip(&values) {
            let got = p.eval(*x);
            prop_assert!((got[0] - v[0]).abs() <= 1e-13 * v[0].abs().max(1.0));
            prop_assert!((got[1] - v[1]).abs() <= 1e-13 * v[1].abs().max(1.0));
        }
    }

    #[test]
    fn interpolant_is_linear_in_values(
        nodes in distinct_nodes(),
        a in prop::collection::vec(-5.0f64..5.0, 8),
        b in prop::collection::vec(-5.0f64..5.0, 8),
        s in -3.0f64..3.0,
        x in -1.5f64..1.5,
    ) {
        let m = nodes.len();
        let pa = Interpolant::new(nodes.clone(), a[..m].iter().map(|&v| vec![v]).collect()).unwrap();
        let pb = Interpolant::new(nodes.clone(), b[..m].iter().map(|&v| vec![v]).collect()).unwrap();
        let pc = Interpolant::new(nodes.clone(), (0..m).map(|j| vec![a[j] + s * b[j]]).collect()).unwrap();
        let lhs = pc.eval(x)[0];
        let rhs = pa.eval(x)[0] + s * pb.eval(x)[0];
        prop_assert!((lhs - rhs).abs() <= 1e-8 * (1.0 + lhs.abs().max(rhs.abs())));
    }

    #[test]
    fn grid_nodes_reproduce_under_state_interpolant(n in 1usize..16, c in -4.0f64..4.0) {
        let g = make_grid(n).unwrap();
        let vals: Vec<Vec<f64>> = g.support().iter().map(|&x| vec![c * x + 1.0]).collect();
        let p = g.state_interpolant(vals).unwrap();
        for &x in g.support() {
            prop_assert!((p.eval(x)[0] - (c * x + 1.0)).abs() < 1e-13 * (1.0 + c.abs()));
        }
    }
}
