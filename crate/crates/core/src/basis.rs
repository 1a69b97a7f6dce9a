//! Legendre-Gauss-Radau grids, quadrature weights, differentiation matrices
//! and barycentric Lagrange interpolation on the reference interval [-1, 1].

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Error, Result};

/// Nodes closer than this to a query are treated as exact hits.
const NODE_HIT: f64 = 1e-15;

/// Evaluates `P_n(x)` and `P_{n-1}(x)` by the three-term recurrence.
pub fn legendre_pair(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let (mut prev, mut cur) = (1.0, x);
    for k in 1..n {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0) * x * cur - kf * prev) / (kf + 1.0);
        prev = cur;
        cur = next;
    }
    (cur, prev)
}

/// `P_n(x)`.
pub fn legendre(n: usize, x: f64) -> f64 {
    legendre_pair(n, x).0
}

/// `P_n'(x)`, valid for |x| < 1 and at the endpoints.
fn legendre_derivative(n: usize, x: f64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let nf = n as f64;
    if (1.0 - x * x).abs() < 1e-14 {
        let s = if x > 0.0 { 1.0 } else { (-1.0f64).powi(n as i32 + 1) };
        return s * nf * (nf + 1.0) / 2.0;
    }
    let (p, q) = legendre_pair(n, x);
    nf * (q - x * p) / (1.0 - x * x)
}

/// A collocation grid with `n` Radau points (including -1, excluding +1).
#[derive(Debug, Clone)]
pub struct CollocationGrid {
    n: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    bary: Vec<f64>,
    diff: Vec<f64>,
}

impl CollocationGrid {
    /// Builds the `n`-point grid.
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidGridSize(n));
        }
        let points = radau_points(n);
        let nf = n as f64;
        let weights = points
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                if i == 0 {
                    2.0 / (nf * nf)
                } else {
                    let p = legendre(n - 1, x);
                    (1.0 - x) / (nf * nf * p * p)
                }
            })
            .collect();
        let mut nodes = points;
        nodes.push(1.0);
        let bary = barycentric_weights(&nodes);
        let mut diff = vec![0.0; n * (n + 1)];
        for i in 0..n {
            let mut diag = 0.0;
            for j in 0..=n {
                if i != j {
                    let d = (bary[j] / bary[i]) / (nodes[i] - nodes[j]);
                    diff[i * (n + 1) + j] = d;
                    diag -= d;
                }
            }
            diff[i * (n + 1) + i] = diag;
        }
        Ok(Self { n, nodes, weights, bary, diff })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// The collocation points, ascending, starting at -1.
    pub fn points(&self) -> &[f64] {
        &self.nodes[..self.n]
    }

    /// Collocation points followed by +1.
    pub fn support(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Barycentric weights of the support nodes.
    pub fn barycentric(&self) -> &[f64] {
        &self.bary
    }

    /// Entry `(i, j)` of the `n x (n+1)` differentiation matrix.
    pub fn diff(&self, i: usize, j: usize) -> f64 {
        self.diff[i * (self.n + 1) + j]
    }

    /// Row `i` of the differentiation matrix.
    pub fn diff_row(&self, i: usize) -> &[f64] {
        &self.diff[i * (self.n + 1)..(i + 1) * (self.n + 1)]
    }

    /// Interpolant of vector values given at the support nodes.
    pub fn state_interpolant(&self, values: Vec<Vec<f64>>) -> Result<Interpolant> {
        Interpolant::with_weights(self.nodes.clone(), self.bary.clone(), values)
    }

    /// Interpolant of vector values given at the collocation points only.
    pub fn point_interpolant(&self, values: Vec<Vec<f64>>) -> Result<Interpolant> {
        Interpolant::new(self.points().to_vec(), values)
    }
}

/// Convenience constructor mirroring [`CollocationGrid::new`].
pub fn make_grid(n: usize) -> Result<CollocationGrid> {
    CollocationGrid::new(n)
}

/// Process-wide cache of grids, shared between meshes and threads.
pub fn shared_grid(n: usize) -> Result<Arc<CollocationGrid>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<CollocationGrid>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(g) = cache.lock().unwrap().get(&n) {
        return Ok(g.clone());
    }
    let g = Arc::new(CollocationGrid::new(n)?);
    cache.lock().unwrap().insert(n, g.clone());
    Ok(g)
}

/// Differentiates nodal values given per component at the `n + 1` support
/// nodes, returning the derivative of each component at the `n` collocation
/// points.
pub fn differentiate(grid: &CollocationGrid, values: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = grid.len();
    values
        .iter()
        .map(|row| {
            if row.len() != n + 1 {
                return Err(Error::LengthMismatch { expected: n + 1, got: row.len() });
            }
            Ok((0..n).map(|i| grid.diff_row(i).iter().zip(row).map(|(d, v)| d * v).sum()).collect())
        })
        .collect()
}

fn radau_points(n: usize) -> Vec<f64> {
    let mut pts = Vec::with_capacity(n);
    pts.push(-1.0);
    let m = (2 * n - 1) as f64;
    for j in 1..n {
        let mut x = -(2.0 * std::f64::consts::PI * j as f64 / m).cos();
        for _ in 0..100 {
            let f = legendre(n - 1, x) + legendre(n, x);
            let df = legendre_derivative(n - 1, x) + legendre_derivative(n, x);
            let dx = f / df;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        pts.push(x);
    }
    pts.sort_by(|a, b| a.total_cmp(b));
    pts
}

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let nf = n as f64;
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = -(std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        for _ in 0..100 {
            let dx = legendre(n, x) / legendre_derivative(n, x);
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let d = legendre_derivative(n, x);
        nodes.push(x);
        weights.push(2.0 / ((1.0 - x * x) * d * d));
    }
    (nodes, weights)
}

fn barycentric_weights(nodes: &[f64]) -> Vec<f64> {
    nodes
        .iter()
        .enumerate()
        .map(|(j, &xj)| {
            let prod: f64 = nodes.iter().enumerate().filter(|&(l, _)| l != j).map(|(_, &xl)| xj - xl).product();
            1.0 / prod
        })
        .collect()
}

/// Lagrange basis values at `x` for the given nodes and barycentric weights.
///
/// Inside the node hull the second (true) barycentric form is used; outside
/// it the modified Lagrange form, which stays stable under extrapolation.
pub fn basis_values(nodes: &[f64], bary: &[f64], x: f64, out: &mut [f64]) {
    for (j, &xj) in nodes.iter().enumerate() {
        if (x - xj).abs() <= NODE_HIT {
            out.iter_mut().for_each(|v| *v = 0.0);
            out[j] = 1.0;
            return;
        }
    }
    let lo = nodes.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = nodes.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if x >= lo && x <= hi {
        let mut denom = 0.0;
        for (j, &xj) in nodes.iter().enumerate() {
            let t = bary[j] / (x - xj);
            out[j] = t;
            denom += t;
        }
        out.iter_mut().for_each(|v| *v /= denom);
    } else {
        let ell: f64 = nodes.iter().map(|&xj| x - xj).product();
        for (j, &xj) in nodes.iter().enumerate() {
            out[j] = ell * bary[j] / (x - xj);
        }
    }
}

/// Vector-valued Lagrange interpolant through distinct nodes.
#[derive(Debug, Clone)]
pub struct Interpolant {
    nodes: Vec<f64>,
    bary: Vec<f64>,
    values: Vec<Vec<f64>>,
    dim: usize,
}

impl Interpolant {
    /// `values[j]` is the vector attached to `nodes[j]`.
    pub fn new(nodes: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        for i in 0..nodes.len() {
            for j in 0..i {
                if nodes[i] == nodes[j] {
                    return Err(Error::DuplicateNodes);
                }
            }
        }
        let bary = barycentric_weights(&nodes);
        Self::with_weights(nodes, bary, values)
    }

    fn with_weights(nodes: Vec<f64>, bary: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        if values.len() != nodes.len() {
            return Err(Error::LengthMismatch { expected: nodes.len(), got: values.len() });
        }
        if nodes.is_empty() {
            return Err(Error::InvalidGridSize(0));
        }
        let dim = values[0].len();
        if let Some(bad) = values.iter().find(|v| v.len() != dim) {
            return Err(Error::LengthMismatch { expected: dim, got: bad.len() });
        }
        Ok(Self { nodes, bary, values, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn eval(&self, x: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(x, &mut out);
        out
    }

    pub fn eval_into(&self, x: f64, out: &mut [f64]) {
        let mut basis = vec![0.0; self.nodes.len()];
        basis_values(&self.nodes, &self.bary, x, &mut basis);
        out.iter_mut().for_each(|v| *v = 0.0);
        for (b, vals) in basis.iter().zip(&self.values) {
            if *b != 0.0 {
                for (o, v) in out.iter_mut().zip(vals) {
                    *o += b * v;
                }
            }
        }
    }

    /// Weights `m[l][j] = integral of basis j from -1 to uppers[l]`, exact for
    /// polynomials of the interpolant's degree.
    pub fn integration_matrix(&self, uppers: &[f64]) -> Vec<Vec<f64>> {
        let (gx, gw) = gauss_legendre(self.nodes.len().max(1));
        let mut basis = vec![0.0; self.nodes.len()];
        uppers
            .iter()
            .map(|&s| {
                let half = (s + 1.0) / 2.0;
                let mut row = vec![0.0; self.nodes.len()];
                for (x, w) in gx.iter().zip(&gw) {
                    basis_values(&self.nodes, &self.bary, half * (x + 1.0) - 1.0, &mut basis);
                    for (r, b) in row.iter_mut().zip(&basis) {
                        *r += half * w * b;
                    }
                }
                row
            })
            .collect()
    }
}

/// Evaluates an interpolant at a query point.
pub fn interpolate(interp: &Interpolant, x: f64) -> Vec<f64> {
    interp.eval(x)
}
