//! Dense kernels shared by the geometry and solver modules.
//!
//! Matrices are `nalgebra::DMatrix<f64>`. QR factorizations here are full
//! ("large") Householder factorizations with the sign convention that the
//! diagonal of the triangular factor is nonnegative.

use nalgebra::{DMatrix, DVector};

/// Real dense matrix used throughout the crate.
pub type Matrix = DMatrix<f64>;
/// Real dense column vector.
pub type Vector = DVector<f64>;

/// Frobenius inner product `tr(aᵀ b)`.
pub fn inner(a: &Matrix, b: &Matrix) -> f64 {
    debug_assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Symmetric part `½(Z + Zᵀ)` of a square matrix.
pub fn sym_part(z: &Matrix) -> Matrix {
    (z + z.transpose()) * 0.5
}

/// Thin SVD `a = u·diag(s)·vᵀ` with singular values in decreasing order.
/// Returns `(u, s, v)` with `u` of shape `m × r`, `v` of shape `n × r`,
/// `r = min(m, n)`.
pub fn svd_thin(a: &Matrix) -> Option<(Matrix, Vector, Matrix)> {
    let (m, n) = a.shape();
    let fa = faer::Mat::<f64>::from_fn(m, n, |i, j| a[(i, j)]);
    let svd = fa.thin_svd().ok()?;
    let (u, s, v) = (svd.U(), svd.S().column_vector(), svd.V());
    let r = m.min(n);
    Some((
        Matrix::from_fn(m, r, |i, j| u[(i, j)]),
        Vector::from_fn(r, |i, _| s[i]),
        Matrix::from_fn(n, r, |i, j| v[(i, j)]),
    ))
}

/// Full QR decomposition `a = q · r` with `q` square orthogonal (rows × rows)
/// and `r` upper trapezoidal (rows × cols) with nonnegative diagonal.
///
/// Columns that are already zero below (and on) the diagonal produce a zero
/// diagonal entry and no reflection, so the zero matrix factors as `(I, 0)`.
pub fn qr_full(a: &Matrix) -> (Matrix, Matrix) {
    let (rows, cols) = a.shape();
    let mut r = a.clone();
    let steps = rows.min(cols);
    let mut reflectors: Vec<(usize, Vector)> = Vec::with_capacity(steps);

    for j in 0..steps {
        let x = r.view((j, j), (rows - j, 1)).column(0).clone_owned();
        let tail_sq: f64 = x.iter().skip(1).map(|v| v * v).sum();
        if tail_sq == 0.0 {
            continue;
        }
        let norm = (x[0] * x[0] + tail_sq).sqrt();
        let alpha = if x[0] >= 0.0 { -norm } else { norm };
        let mut v = x;
        v[0] -= alpha;
        let vnorm = v.norm();
        v /= vnorm;
        // r[j.., j..] -= 2 v (vᵀ r[j.., j..])
        let mut block = r.view_mut((j, j), (rows - j, cols - j));
        let w = block.tr_mul(&v);
        block.ger(-2.0, &v, &w, 1.0);
        for i in (j + 1)..rows {
            r[(i, j)] = 0.0;
        }
        reflectors.push((j, v));
    }

    let mut q = Matrix::identity(rows, rows);
    for (j, v) in reflectors.iter().rev() {
        let mut block = q.view_mut((*j, *j), (rows - j, rows - j));
        let w = block.tr_mul(v);
        block.ger(-2.0, v, &w, 1.0);
    }

    for i in 0..steps {
        if r[(i, i)] < 0.0 {
            r.row_mut(i).neg_mut();
            q.column_mut(i).neg_mut();
        }
    }
    (q, r)
}

/// Orthonormalizes the columns of a tall matrix (Q factor of a thin QR).
pub fn orthonormalize(a: &Matrix) -> Matrix {
    let (q, _) = qr_full(a);
    q.columns(0, a.ncols()).clone_owned()
}

/// `‖aᵀa − I‖_F`.
pub fn orthonormality_defect(a: &Matrix) -> f64 {
    let mut g = a.tr_mul(a);
    for i in 0..g.nrows() {
        g[(i, i)] -= 1.0;
    }
    g.norm()
}

/// Givens pair `(c, s, r)` with `c·a + s·b = r ≥ 0` and `−s·a + c·b = 0`.
pub(crate) fn givens(a: f64, b: f64) -> (f64, f64, f64) {
    if b == 0.0 {
        if a >= 0.0 {
            (1.0, 0.0, a)
        } else {
            (-1.0, 0.0, -a)
        }
    } else {
        let r = a.hypot(b);
        (a / r, b / r, r)
    }
}
