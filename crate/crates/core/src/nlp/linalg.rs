//! Band LU with partial pivoting, and a bordered solver that keeps a handful
//! of long-range rows/columns out of the band.

/// LU factorization of a band matrix with `kl` sub- and `ku` super-diagonals,
/// stored column-major with room for the fill that row exchanges create.
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    ld: usize,
    ab: Vec<f64>,
    pivots: Vec<usize>,
}

impl BandedLu {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let ld = 2 * kl + ku + 1;
        Self { n, kl, ku, ld, ab: vec![0.0; ld * n], pivots: vec![0; n] }
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        self.kl + self.ku + i - j + j * self.ld
    }

    /// Adds `v` to entry `(i, j)`, which must lie inside the band.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i <= j + self.kl && j <= i + self.ku);
        let k = self.idx(i, j);
        self.ab[k] += v;
    }

    /// In-place factorization. Returns the smallest pivot magnitude, or
    /// `None` for an exactly singular or non-finite matrix.
    pub fn factor(&mut self) -> Option<f64> {
        let (n, kl, kv) = (self.n, self.kl, self.kl + self.ku);
        let mut ju = 0usize;
        let mut min_pivot = f64::INFINITY;
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let base = self.idx(j, j);
            let mut jp = 0;
            let mut best = self.ab[base].abs();
            for t in 1..=km {
                let v = self.ab[base + t].abs();
                if v > best {
                    best = v;
                    jp = t;
                }
            }
            self.pivots[j] = j + jp;
            if best == 0.0 || !best.is_finite() {
                return None;
            }
            min_pivot = min_pivot.min(best);
            ju = ju.max((j + self.ku + jp).min(n - 1));
            if jp != 0 {
                for c in j..=ju {
                    let a = kv + j - c + c * self.ld;
                    self.ab.swap(a, a + jp);
                }
            }
            let piv = self.ab[base];
            for t in 1..=km {
                self.ab[base + t] /= piv;
            }
            for c in j + 1..=ju {
                let top = kv + j - c + c * self.ld;
                let ajc = self.ab[top];
                if ajc != 0.0 {
                    for t in 1..=km {
                        self.ab[top + t] -= self.ab[base + t] * ajc;
                    }
                }
            }
        }
        Some(min_pivot)
    }

    /// Solves in place with a factored matrix.
    pub fn solve(&self, b: &mut [f64]) {
        let (n, kl, kv) = (self.n, self.kl, self.kl + self.ku);
        for j in 0..n {
            let p = self.pivots[j];
            if p != j {
                b.swap(p, j);
            }
            let km = kl.min(n - 1 - j);
            let base = self.idx(j, j);
            let bj = b[j];
            if bj != 0.0 {
                for t in 1..=km {
                    b[j + t] -= self.ab[base + t] * bj;
                }
            }
        }
        for j in (0..n).rev() {
            let diag = self.ab[self.idx(j, j)];
            b[j] /= diag;
            let bj = b[j];
            if bj != 0.0 {
                let lo = j.saturating_sub(kv);
                for i in lo..j {
                    b[i] -= self.ab[kv + i - j + j * self.ld] * bj;
                }
            }
        }
    }
}

/// Dense LU with partial pivoting, row-major.
#[derive(Debug, Clone)]
struct DenseLu {
    n: usize,
    a: Vec<f64>,
    pivots: Vec<usize>,
}

impl DenseLu {
    fn factor(n: usize, mut a: Vec<f64>) -> Option<Self> {
        let mut pivots = vec![0; n];
        for k in 0..n {
            let mut p = k;
            for i in k + 1..n {
                if a[i * n + k].abs() > a[p * n + k].abs() {
                    p = i;
                }
            }
            pivots[k] = p;
            let piv = a[p * n + k];
            if piv == 0.0 || !piv.is_finite() {
                return None;
            }
            if p != k {
                for c in 0..n {
                    a.swap(k * n + c, p * n + c);
                }
            }
            for i in k + 1..n {
                let l = a[i * n + k] / piv;
                a[i * n + k] = l;
                if l != 0.0 {
                    for c in k + 1..n {
                        a[i * n + c] -= l * a[k * n + c];
                    }
                }
            }
        }
        Some(Self { n, a, pivots })
    }

    fn solve(&self, b: &mut [f64]) {
        let n = self.n;
        for k in 0..n {
            b.swap(k, self.pivots[k]);
        }
        for i in 0..n {
            let s: f64 = (0..i).map(|c| self.a[i * n + c] * b[c]).sum();
            b[i] -= s;
        }
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|c| self.a[i * n + c] * b[c]).sum();
            b[i] = (b[i] - s) / self.a[i * n + i];
        }
    }
}

/// Direct solver for a sparse symmetric matrix whose rows, sorted by a caller
/// supplied key, form a band except for a few long-range "border" rows.
///
/// The band part is factored with [`BandedLu`]; the border is eliminated
/// through a dense Schur complement.
#[derive(Debug, Clone)]
pub struct BorderedSolver {
    n: usize,
    /// Original index to position; positions `< core` are in the band.
    position: Vec<usize>,
    core: usize,
    bandwidth: usize,
    lower: Vec<(usize, usize)>,
    band: Option<BandedLu>,
    coupling: Vec<Vec<f64>>,
    reduced: Vec<Vec<f64>>,
    schur: Option<DenseLu>,
}

/// Below this size everything stays in the band.
const SMALL_SYSTEM: usize = 120;

impl BorderedSolver {
    /// `lower` lists structural entries `(i, j)` with `i >= j`; `keys` orders
    /// the unknowns so that coupled unknowns end up close together.
    pub fn analyze(n: usize, lower: &[(usize, usize)], keys: &[f64]) -> Self {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| keys[a].total_cmp(&keys[b]).then(a.cmp(&b)));
        let mut pos = vec![0; n];
        for (p, &i) in order.iter().enumerate() {
            pos[i] = p;
        }
        let mut border = vec![false; n];
        if n > SMALL_SYSTEM {
            // dense unknowns first, then whatever still reaches far
            let mut degree = vec![0usize; n];
            for &(i, j) in lower {
                if i != j {
                    degree[i] += 1;
                    degree[j] += 1;
                }
            }
            let mut sorted = degree.clone();
            sorted.sort_unstable();
            let limit = (8 * sorted[n / 2]).max(40);
            for i in 0..n {
                border[i] = degree[i] > limit;
            }
            let mut span = vec![0usize; n];
            for &(i, j) in lower {
                if !border[i] && !border[j] {
                    let d = pos[i].abs_diff(pos[j]);
                    span[i] = span[i].max(d);
                    span[j] = span[j].max(d);
                }
            }
            let mut sorted = span.clone();
            sorted.sort_unstable();
            let threshold = (4 * sorted[(n * 9) / 10]).max(40);
            for i in 0..n {
                border[i] |= span[i] > threshold;
            }
            if border.iter().filter(|b| **b).count() > n / 4 {
                border.iter_mut().for_each(|b| *b = false);
            }
        }
        let mut position = vec![0; n];
        let mut next = 0;
        for &i in &order {
            if !border[i] {
                position[i] = next;
                next += 1;
            }
        }
        let core = next;
        for &i in &order {
            if border[i] {
                position[i] = next;
                next += 1;
            }
        }
        let mut bandwidth: usize = 0;
        for &(i, j) in lower {
            if position[i] < core && position[j] < core {
                bandwidth = bandwidth.max(usize::abs_diff(position[i], position[j]));
            }
        }
        Self {
            n,
            position,
            core,
            bandwidth,
            lower: lower.to_vec(),
            band: None,
            coupling: Vec::new(),
            reduced: Vec::new(),
            schur: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn border_size(&self) -> usize {
        self.n - self.core
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    /// Factors the matrix with values matching the `lower` entries given to
    /// [`BorderedSolver::analyze`]. Returns false when singular.
    pub fn factor(&mut self, values: &[f64]) -> bool {
        let (core, s) = (self.core, self.n - self.core);
        let mut band = BandedLu::zeros(core, self.bandwidth, self.bandwidth);
        let mut coupling = vec![vec![0.0; core]; s];
        let mut c = vec![0.0; s * s];
        for (&(i, j), &v) in self.lower.iter().zip(values) {
            let (pi, pj) = (self.position[i], self.position[j]);
            match (pi < core, pj < core) {
                (true, true) => {
                    band.add(pi, pj, v);
                    if pi != pj {
                        band.add(pj, pi, v);
                    }
                }
                (true, false) => coupling[pj - core][pi] += v,
                (false, true) => coupling[pi - core][pj] += v,
                (false, false) => {
                    let (a, b) = (pi - core, pj - core);
                    c[a * s + b] += v;
                    if a != b {
                        c[b * s + a] += v;
                    }
                }
            }
        }
        if core > 0 && band.factor().is_none() {
            return false;
        }
        let reduced: Vec<Vec<f64>> = coupling
            .iter()
            .map(|col| {
                let mut x = col.clone();
                band.solve(&mut x);
                x
            })
            .collect();
        for a in 0..s {
            for b in 0..s {
                let dot: f64 = coupling[a].iter().zip(&reduced[b]).map(|(p, q)| p * q).sum();
                c[a * s + b] -= dot;
            }
        }
        let schur = if s > 0 {
            match DenseLu::factor(s, c) {
                Some(f) => Some(f),
                None => return false,
            }
        } else {
            None
        };
        self.band = Some(band);
        self.coupling = coupling;
        self.reduced = reduced;
        self.schur = schur;
        true
    }

    /// Solves with the last successful factorization.
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let (core, s) = (self.core, self.n - self.core);
        let mut x1 = vec![0.0; core];
        let mut x2 = vec![0.0; s];
        for i in 0..self.n {
            let p = self.position[i];
            if p < core {
                x1[p] = rhs[i];
            } else {
                x2[p - core] = rhs[i];
            }
        }
        if let Some(band) = &self.band {
            if core > 0 {
                band.solve(&mut x1);
            }
        }
        if let Some(schur) = &self.schur {
            for a in 0..s {
                let dot: f64 = self.coupling[a].iter().zip(&x1).map(|(p, q)| p * q).sum();
                x2[a] -= dot;
            }
            schur.solve(&mut x2);
            for (a, col) in self.reduced.iter().enumerate() {
                let v = x2[a];
                for (x, r) in x1.iter_mut().zip(col) {
                    *x -= r * v;
                }
            }
        }
        (0..self.n)
            .map(|i| {
                let p = self.position[i];
                if p < core {
                    x1[p]
                } else {
                    x2[p - core]
                }
            })
            .collect()
    }

    /// `y = K x` for the symmetric matrix with the given lower values.
    pub fn multiply(&self, values: &[f64], x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for (&(i, j), &v) in self.lower.iter().zip(values) {
            y[i] += v * x[j];
            if i != j {
                y[j] += v * x[i];
            }
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check_solve(n: usize, lower: Vec<(usize, usize)>, values: Vec<f64>, keys: Vec<f64>) {
        let mut s = BorderedSolver::analyze(n, &lower, &keys);
        assert!(s.factor(&values));
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let b = s.multiply(&values, &x);
        let y = s.solve(&b);
        for i in 0..n {
            assert!((x[i] - y[i]).abs() < 1e-9, "i={i} {} vs {}", x[i], y[i]);
        }
    }

    #[test]
    fn band_lu_needs_pivoting() {
        // zero diagonal forces row exchanges
        let mut b = BandedLu::zeros(3, 1, 1);
        b.add(0, 1, 1.0);
        b.add(1, 0, 1.0);
        b.add(1, 2, 2.0);
        b.add(2, 1, 2.0);
        b.add(2, 2, 1.0);
        assert!(b.factor().is_some());
        let mut x = vec![1.0, 3.0, 4.0];
        b.solve(&mut x);
        // A = [[0,1,0],[1,0,2],[0,2,1]]
        let r = [x[1], x[0] + 2.0 * x[2], 2.0 * x[1] + x[2]];
        assert!((r[0] - 1.0).abs() < 1e-14 && (r[1] - 3.0).abs() < 1e-14 && (r[2] - 4.0).abs() < 1e-14);
    }

    #[test]
    fn saddle_point_with_border() {
        // tridiagonal-ish indefinite matrix plus a dense last row/column
        let n = 300;
        let mut lower = Vec::new();
        let mut values = Vec::new();
        for i in 0..n - 1 {
            lower.push((i, i));
            values.push(if i % 3 == 0 { 0.0 } else { 2.0 + i as f64 * 0.01 });
            if i > 0 {
                lower.push((i, i - 1));
                values.push(1.0);
            }
            lower.push((n - 1, i));
            values.push(0.01 * ((i % 7) as f64 - 3.0));
        }
        lower.push((n - 1, n - 1));
        values.push(5.0);
        let keys: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let s = BorderedSolver::analyze(n, &lower, &keys);
        assert_eq!(s.border_size(), 1);
        check_solve(n, lower, values, keys);
    }

    #[test]
    fn singular_detected() {
        let lower = vec![(0, 0), (1, 0), (1, 1)];
        let mut s = BorderedSolver::analyze(2, &lower, &[0.0, 1.0]);
        assert!(!s.factor(&[1.0, 1.0, 1.0]));
    }
}
