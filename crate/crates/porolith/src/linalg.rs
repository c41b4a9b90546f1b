//! Sparse symmetric matrices in compressed-row layout and a
//! Jacobi-preconditioned conjugate gradient solver.
//!
//! Accumulation order in dot products and matrix-vector products is fixed,
//! so convergence histories replay bit-for-bit.

use crate::error::{Error, Result};

/// Structurally symmetric sparse matrix, compressed row storage.
/// Both triangles are stored so the row-wise product needs no transpose pass.
#[derive(Debug, Clone)]
pub struct SparseSymMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseSymMatrix {
    /// Assemble from (row, col, value) triplets; duplicates are summed.
    /// Entries within a row end up sorted by column.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by_key(|t| (t.0, t.1));
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for &(r, c, v) in &triplets {
            debug_assert!(r < n && c < n);
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..n {
            row_ptr[r + 1] += row_ptr[r];
        }
        SparseSymMatrix { n, row_ptr, col_idx, values }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let lo = self.row_ptr[r];
        let hi = self.row_ptr[r + 1];
        (&self.col_idx[lo..hi], &self.values[lo..hi])
    }

    /// y = A x
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(y.len(), self.n);
        for (r, out) in y.iter_mut().enumerate() {
            let (cols, vals) = self.row(r);
            let mut acc = 0.0;
            for (c, v) in cols.iter().zip(vals) {
                acc += v * x[*c];
            }
            *out = acc;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for (r, diag) in d.iter_mut().enumerate() {
            let (cols, vals) = self.row(r);
            for (c, v) in cols.iter().zip(vals) {
                if *c == r {
                    *diag = *v;
                }
            }
        }
        d
    }

    /// Structural and numeric symmetry check, |a_ij - a_ji| <= tol * max|a|.
    pub fn symmetry_defect(&self) -> f64 {
        let mut defect: f64 = 0.0;
        for r in 0..self.n {
            let (cols, vals) = self.row(r);
            for (c, v) in cols.iter().zip(vals) {
                let (tcols, tvals) = self.row(*c);
                let back = tcols
                    .iter()
                    .position(|&tc| tc == r)
                    .map(|p| tvals[p])
                    .unwrap_or(0.0);
                defect = defect.max((v - back).abs());
            }
        }
        defect
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Outcome of a converged CG solve.
#[derive(Debug, Clone)]
pub struct CgSolution {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Final relative residual ||b - Ax|| / ||b||.
    pub relative_residual: f64,
}

/// Jacobi-preconditioned conjugate gradients for SPD systems.
///
/// Returns x with ||Ax - b|| / ||b|| <= tol. `max_iter = 0` selects the
/// default cap of 10 * dimension.
pub fn cg_solve(a: &SparseSymMatrix, b: &[f64], tol: f64, max_iter: usize) -> Result<CgSolution> {
    let n = a.dim();
    assert_eq!(b.len(), n, "rhs length mismatch");
    let max_iter = if max_iter == 0 { 10 * n.max(1) } else { max_iter };

    let b_norm = norm2(b);
    if b_norm == 0.0 {
        return Ok(CgSolution { x: vec![0.0; n], iterations: 0, relative_residual: 0.0 });
    }

    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d != 0.0 { 1.0 / d } else { 1.0 })
        .collect();

    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];

    // monitored in debug builds: the CG quadratic 1/2 x'Ax - b'x must not increase
    #[cfg(debug_assertions)]
    let mut last_quadratic = f64::INFINITY;

    for it in 1..=max_iter {
        a.matvec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap.is_nan() || pap <= 0.0 {
            return Err(Error::SolverStall {
                iterations: it,
                residual: norm2(&r) / b_norm,
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }

        #[cfg(debug_assertions)]
        {
            let mut ax = vec![0.0; n];
            a.matvec(&x, &mut ax);
            let q = 0.5 * dot(&x, &ax) - dot(b, &x);
            debug_assert!(
                !q.is_finite()
                    || !last_quadratic.is_finite()
                    || q <= last_quadratic + 1e-12 * (q.abs() + 1.0),
                "CG energy functional increased: {q} > {last_quadratic}"
            );
            last_quadratic = q;
        }

        let res = norm2(&r) / b_norm;
        if res <= tol {
            return Ok(CgSolution { x, iterations: it, relative_residual: res });
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }

    Err(Error::SolverStall { iterations: max_iter, residual: norm2(&r) / b_norm })
}
