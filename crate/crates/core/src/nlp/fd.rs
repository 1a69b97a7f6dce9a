use rayon::prelude::*;

use super::NlpProblem;

/// Sparse matrix in coordinate form.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseMatrix {
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for k in 0..self.nnz() {
            d[self.rows[k]][self.cols[k]] += self.values[k];
        }
        d
    }

    /// `y += A x`.
    pub fn mul_add(&self, x: &[f64], y: &mut [f64]) {
        for k in 0..self.nnz() {
            y[self.rows[k]] += self.values[k] * x[self.cols[k]];
        }
    }

    /// `y += A^T x`.
    pub fn mul_transpose_add(&self, x: &[f64], y: &mut [f64]) {
        for k in 0..self.nnz() {
            y[self.cols[k]] += self.values[k] * x[self.rows[k]];
        }
    }
}

/// Greedy distance-2 coloring: columns sharing a row never share a color.
/// Returns the color of each column among `columns`.
pub fn color_columns(ncols: usize, pattern: &[(usize, usize)], columns: &[usize]) -> Vec<Vec<usize>> {
    let nrows = pattern.iter().map(|&(r, _)| r + 1).max().unwrap_or(0);
    let mut row_cols = vec![Vec::new(); nrows];
    let mut col_rows = vec![Vec::new(); ncols];
    for &(r, c) in pattern {
        row_cols[r].push(c);
        col_rows[c].push(r);
    }
    let mut color = vec![usize::MAX; ncols];
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut mark: Vec<usize> = Vec::new();
    for &c in columns {
        for &r in &col_rows[c] {
            for &other in &row_cols[r] {
                if color[other] != usize::MAX {
                    let k = color[other];
                    if mark.len() <= k {
                        mark.resize(k + 1, usize::MAX);
                    }
                    mark[k] = c;
                }
            }
        }
        let k = (0..groups.len()).find(|&k| mark.get(k) != Some(&c)).unwrap_or(groups.len());
        if k == groups.len() {
            groups.push(Vec::new());
        }
        groups[k].push(c);
        color[c] = k;
    }
    groups
}

#[derive(Clone, Copy, PartialEq)]
enum Stencil {
    Central,
    Forward,
    Backward,
}

fn stencil(z: f64, h: f64, lo: f64, hi: f64) -> Stencil {
    if z - h >= lo && z + h <= hi {
        Stencil::Central
    } else if z + 2.0 * h <= hi {
        Stencil::Forward
    } else if z - 2.0 * h >= lo {
        Stencil::Backward
    } else {
        Stencil::Central
    }
}

fn step_size(z: f64, rel: f64) -> f64 {
    rel * z.abs().max(1.0)
}

/// Sparse constraint Jacobian by grouped central differences. Columns within
/// a step of a bound use one-sided second-order stencils instead.
pub fn fd_jacobian<P: NlpProblem + ?Sized>(problem: &P, z: &[f64], rel_step: f64) -> SparseMatrix {
    let n = problem.num_variables();
    let m = problem.num_constraints();
    let pattern = problem.jacobian_pattern();
    let (zl, zu) = problem.variable_bounds();
    let h: Vec<f64> = z.iter().map(|v| step_size(*v, rel_step)).collect();
    let kinds: Vec<Stencil> = (0..n).map(|j| stencil(z[j], h[j], zl[j], zu[j])).collect();

    let mut groups: Vec<(Stencil, Vec<usize>)> = Vec::new();
    for kind in [Stencil::Central, Stencil::Forward, Stencil::Backward] {
        let cols: Vec<usize> = (0..n).filter(|&j| kinds[j] == kind).collect();
        if !cols.is_empty() {
            for g in color_columns(n, &pattern, &cols) {
                groups.push((kind, g));
            }
        }
    }

    let needs_base = groups.iter().any(|(k, _)| *k != Stencil::Central);
    let base = if needs_base {
        let mut c = vec![0.0; m];
        problem.constraints(z, &mut c);
        c
    } else {
        Vec::new()
    };

    let eval_shift = |cols: &[usize], factor: f64| {
        let mut zz = z.to_vec();
        for &j in cols {
            zz[j] += factor * h[j];
        }
        let mut c = vec![0.0; m];
        problem.constraints(&zz, &mut c);
        c
    };

    // Each group yields (column -> group index) and a derivative-by-row closure input.
    let results: Vec<(Stencil, Vec<f64>, Vec<f64>)> = groups
        .par_iter()
        .map(|(kind, cols)| match kind {
            Stencil::Central => (*kind, eval_shift(cols, 1.0), eval_shift(cols, -1.0)),
            Stencil::Forward => (*kind, eval_shift(cols, 1.0), eval_shift(cols, 2.0)),
            Stencil::Backward => (*kind, eval_shift(cols, -1.0), eval_shift(cols, -2.0)),
        })
        .collect();

    let mut group_of = vec![usize::MAX; n];
    for (g, (_, cols)) in groups.iter().enumerate() {
        for &j in cols {
            group_of[j] = g;
        }
    }

    let mut out = SparseMatrix {
        nrows: m,
        ncols: n,
        rows: Vec::with_capacity(pattern.len()),
        cols: Vec::with_capacity(pattern.len()),
        values: Vec::with_capacity(pattern.len()),
    };
    for &(r, j) in &pattern {
        let (kind, a, b) = &results[group_of[j]];
        let v = match kind {
            Stencil::Central => (a[r] - b[r]) / (2.0 * h[j]),
            Stencil::Forward => (-3.0 * base[r] + 4.0 * a[r] - b[r]) / (2.0 * h[j]),
            Stencil::Backward => (3.0 * base[r] - 4.0 * a[r] + b[r]) / (2.0 * h[j]),
        };
        out.rows.push(r);
        out.cols.push(j);
        out.values.push(v);
    }
    out
}

/// Objective gradient by central differences, one-sided near bounds.
pub fn fd_gradient<P: NlpProblem + ?Sized>(problem: &P, z: &[f64], rel_step: f64, grad: &mut [f64]) {
    let (zl, zu) = problem.variable_bounds();
    let f0 = problem.objective(z);
    let mut zz = z.to_vec();
    for j in 0..z.len() {
        let h = step_size(z[j], rel_step);
        let mut at = |d: f64| {
            zz[j] = z[j] + d;
            let v = problem.objective(&zz);
            zz[j] = z[j];
            v
        };
        grad[j] = match stencil(z[j], h, zl[j], zu[j]) {
            Stencil::Central => (at(h) - at(-h)) / (2.0 * h),
            Stencil::Forward => (-3.0 * f0 + 4.0 * at(h) - at(2.0 * h)) / (2.0 * h),
            Stencil::Backward => (3.0 * f0 - 4.0 * at(-h) + at(-2.0 * h)) / (2.0 * h),
        };
    }
}
