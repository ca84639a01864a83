//! Sparse quadratic systems and a Jacobi-preconditioned conjugate-gradient
//! solver.

use rayon::prelude::*;

/// Rows above this size use a parallel matrix-vector product.
const PAR_ROWS_MIN: usize = 4096;

/// Compressed sparse row matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col: Vec<usize>,
    pub val: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from triplets, summing duplicates in input order.
    pub fn from_triplets(n: usize, mut trip: Vec<(usize, usize, f64)>) -> Self {
        trip.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; n + 1];
        let mut col = Vec::with_capacity(trip.len());
        let mut val: Vec<f64> = Vec::with_capacity(trip.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in trip {
            if last == Some((r, c)) {
                *val.last_mut().expect("entry") += v;
            } else {
                col.push(c);
                val.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..n {
            row_ptr[r + 1] += row_ptr[r];
        }
        CsrMatrix { n, row_ptr, col, val }
    }

    pub fn mul_into(&self, x: &[f64], out: &mut [f64]) {
        let row = |r: usize| -> f64 { (self.row_ptr[r]..self.row_ptr[r + 1]).map(|k| self.val[k] * x[self.col[k]]).sum() };
        if self.n >= PAR_ROWS_MIN {
            out.par_iter_mut().enumerate().for_each(|(r, o)| *o = row(r));
        } else {
            out.iter_mut().enumerate().for_each(|(r, o)| *o = row(r));
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|r| (self.row_ptr[r]..self.row_ptr[r + 1]).find(|&k| self.col[k] == r).map_or(0.0, |k| self.val[k])).collect()
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        (self.row_ptr[r]..self.row_ptr[r + 1]).find(|&k| self.col[k] == c).map_or(0.0, |k| self.val[k])
    }
}

/// One axis of a quadratic objective `sum w (p_a + o_a - p_b - o_b)^2`
/// over movable variables, collected as triplets.
#[derive(Clone, Debug, Default)]
pub struct QpBuilder {
    n: usize,
    trip: Vec<(usize, usize, f64)>,
    rhs: Vec<f64>,
}

impl QpBuilder {
    pub fn new(n: usize) -> Self {
        QpBuilder { n, trip: Vec::new(), rhs: vec![0.0; n] }
    }

    /// Spring of weight `w` between variable `a` (pin offset `oa`) and
    /// variable `b` (pin offset `ob`).
    pub fn add_pair(&mut self, a: usize, oa: f64, b: usize, ob: f64, w: f64) {
        if a == b || w == 0.0 {
            return;
        }
        self.trip.extend([(a, a, w), (b, b, w), (a, b, -w), (b, a, -w)]);
        let c = oa - ob;
        self.rhs[a] -= w * c;
        self.rhs[b] += w * c;
    }

    /// Spring of weight `w` pulling variable `a` (pin offset `oa`) to `target`.
    pub fn add_anchor(&mut self, a: usize, oa: f64, target: f64, w: f64) {
        if w == 0.0 {
            return;
        }
        self.trip.push((a, a, w));
        self.rhs[a] += w * (target - oa);
    }

    pub fn build(self) -> QpSystem {
        QpSystem { matrix: CsrMatrix::from_triplets(self.n, self.trip), rhs: self.rhs }
    }
}

/// Symmetric positive (semi)definite system `A p = b` for one axis.
#[derive(Clone, Debug, PartialEq)]
pub struct QpSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    /// Final relative residual `|b - A x| / |b|`.
    pub residual: f64,
    pub converged: bool,
}

impl QpSystem {
    pub fn is_symmetric(&self) -> bool {
        let m = &self.matrix;
        (0..m.n).all(|r| (m.row_ptr[r]..m.row_ptr[r + 1]).all(|k| (m.get(m.col[k], r) - m.val[k]).abs() <= 1e-12 * m.val[k].abs().max(1.0)))
    }

    pub fn residual(&self, x: &[f64]) -> f64 {
        let mut ax = vec![0.0; x.len()];
        self.matrix.mul_into(x, &mut ax);
        let r = ax.iter().zip(&self.rhs).map(|(a, b)| (b - a) * (b - a)).sum::<f64>().sqrt();
        r / norm(&self.rhs).max(f64::MIN_POSITIVE)
    }

    /// Jacobi-preconditioned conjugate gradient from the initial guess in
    /// `x`. Stops at relative residual `tol` or `10 n` iterations; on the
    /// cap, `x` holds the best iterate seen.
    pub fn solve(&self, x: &mut [f64], tol: f64) -> SolveReport {
        let n = self.matrix.n;
        let bnorm = norm(&self.rhs);
        if n == 0 || bnorm == 0.0 && self.residual(x) == 0.0 {
            return SolveReport { iterations: 0, residual: 0.0, converged: true };
        }
        let scale = bnorm.max(f64::MIN_POSITIVE);
        let inv_diag: Vec<f64> = self.matrix.diagonal().iter().map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 }).collect();
        let mut r = vec![0.0; n];
        self.matrix.mul_into(x, &mut r);
        for i in 0..n {
            r[i] = self.rhs[i] - r[i];
        }
        let mut z: Vec<f64> = (0..n).map(|i| r[i] * inv_diag[i]).collect();
        let mut p = z.clone();
        let mut ap = vec![0.0; n];
        let mut rz = dot(&r, &z);
        let mut best = (norm(&r) / scale, x.to_vec());
        let cap = 10 * n;
        let mut it = 0;
        while best.0 > tol && it < cap {
            it += 1;
            self.matrix.mul_into(&p, &mut ap);
            let pap = dot(&p, &ap);
            if !(pap > 0.0) {
                break;
            }
            let alpha = rz / pap;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            let res = norm(&r) / scale;
            if res < best.0 {
                best.0 = res;
                best.1.copy_from_slice(x);
            }
            for i in 0..n {
                z[i] = r[i] * inv_diag[i];
            }
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        x.copy_from_slice(&best.1);
        // report the true residual of the returned iterate
        let residual = self.residual(x);
        SolveReport { iterations: it, residual, converged: residual <= tol }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
