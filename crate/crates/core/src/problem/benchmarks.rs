use std::f64::consts::PI;
use std::sync::Arc;

use super::{OcpDefinition, TimeSpec};

/// Arm length of the robot arm problem.
pub const ROBOT_ARM_LENGTH: f64 = 5.0;

/// Moment of inertia of the robot arm about its pivot at extension `rho`.
pub fn robot_arm_inertia(rho: f64) -> f64 {
    let l = ROBOT_ARM_LENGTH;
    ((l - rho).powi(3) + rho.powi(3)) / 3.0
}

/// Minimum-time reorientation of a telescoping robot arm.
///
/// States `[rho, theta, phi, rho', theta', phi']`, controls `[u_rho, u_theta,
/// u_phi]` bounded by one in magnitude; the objective is the final time.
pub fn robot_arm() -> OcpDefinition {
    let l = ROBOT_ARM_LENGTH;
    let inf = f64::INFINITY;
    OcpDefinition::new("robot_arm", 6, 3, move |x, u, _| {
        let inertia = robot_arm_inertia(x[0]);
        let s = x[2].sin();
        vec![x[3], x[4], x[5], u[0] / l, u[1] / (inertia * s * s), u[2] / inertia]
    })
    .with_mayer(|_, _, _, tf| tf)
    .with_state_bounds(vec![(0.0, l), (-PI, PI), (0.0, PI), (-inf, inf), (-inf, inf), (-inf, inf)])
    .with_control_bounds(vec![(-1.0, 1.0); 3])
    .with_initial_state(vec![Some(4.5), Some(0.0), Some(PI / 4.0), Some(0.0), Some(0.0), Some(0.0)])
    .with_final_state(vec![Some(4.5), Some(2.0 * PI / 3.0), Some(PI / 4.0), Some(0.0), Some(0.0), Some(0.0)])
}

/// The hyper-sensitive problem: `x' = -x^3 + u`, cost `(x^2 + u^2) / 2`,
/// `x(0) = 1.5`, `x(tf) = 1`.
pub fn hyper_sensitive(tf: f64) -> OcpDefinition {
    OcpDefinition::new("hyper_sensitive", 1, 1, |x, u, _| vec![-x[0].powi(3) + u[0]])
        .with_lagrange(|x, u, _| 0.5 * (x[0] * x[0] + u[0] * u[0]))
        .with_times(TimeSpec::Fixed(0.0), TimeSpec::Fixed(tf))
        .with_initial_state(vec![Some(1.5)])
        .with_final_state(vec![Some(1.0)])
}

type AeroFn = dyn Fn(f64, f64) -> f64 + Send + Sync;

/// Thrust, drag and mass data for the supersonic climb problem.
#[derive(Clone)]
pub struct AeroModel {
    pub thrust: Arc<AeroFn>,
    pub drag: Arc<AeroFn>,
    pub mass: f64,
    pub gravity: f64,
}

impl AeroModel {
    pub fn new<T, D>(thrust: T, drag: D, mass: f64, gravity: f64) -> Self
    where
        T: Fn(f64, f64) -> f64 + Send + Sync + 'static,
        D: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        Self { thrust: Arc::new(thrust), drag: Arc::new(drag), mass, gravity }
    }
}

/// Minimum-time climb of a supersonic aircraft; states `[h, v, gamma]`,
/// control the load factor.
pub fn supersonic_climb(aero: AeroModel) -> OcpDefinition {
    let inf = f64::INFINITY;
    OcpDefinition::new("supersonic_climb", 3, 1, move |x, u, _| {
        let (h, v, gamma) = (x[0], x[1], x[2]);
        let g = aero.gravity;
        vec![
            v * gamma.sin(),
            ((aero.thrust)(h, v) - (aero.drag)(h, v)) / aero.mass - g * gamma.sin(),
            g * (u[0] - gamma.cos()) / v,
        ]
    })
    .with_mayer(|_, _, _, tf| tf)
    .with_state_bounds(vec![(-inf, inf), (-inf, inf), (0.0, PI / 2.0)])
    .with_initial_state(vec![Some(0.0), Some(0.12931), Some(0.0)])
    .with_final_state(vec![Some(19.995), Some(0.29509), Some(0.0)])
}
