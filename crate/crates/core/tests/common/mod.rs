//! Dense reference implementations used by the integration tests.
//!
//! Everything here works with full `m × m` matrices and textbook formulas so
//! that it shares no code path with the compact kernels under test.
#![allow(dead_code)]

use rpca::data::SeededRng;
use rpca::geometry::{Frame, StiefelBasis};
use rpca::Matrix;

pub fn random(rows: usize, cols: usize, rng: &mut SeededRng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.normal())
}

pub fn random_basis(m: usize, k: usize, rng: &mut SeededRng) -> StiefelBasis {
    StiefelBasis::orthonormalize(&random(m, k, rng)).unwrap()
}

/// Q factor with nonnegative `R` diagonal, via nalgebra's Householder QR.
pub fn q_factor(a: &Matrix) -> Matrix {
    let qr = a.clone().qr();
    let mut q = qr.q();
    let r = qr.r();
    for i in 0..r.nrows().min(r.ncols()) {
        if r[(i, i)] < 0.0 {
            q.column_mut(i).neg_mut();
        }
    }
    q
}

/// Full QR `a = q·r` (square `q`) with nonnegative diagonal of `r`.
pub fn full_qr(a: &Matrix) -> (Matrix, Matrix) {
    let (rows, cols) = a.shape();
    let thin = q_factor(a);
    let p = thin.ncols();
    // Completing [Q_thin | I] keeps the leading columns and adds a complement.
    let mut ext = Matrix::zeros(rows, p + rows);
    ext.columns_mut(0, p).copy_from(&thin);
    ext.columns_mut(p, rows).copy_from(&Matrix::identity(rows, rows));
    let mut q = q_factor(&ext).columns(0, rows).clone_owned();
    for j in 0..p {
        if q.column(j).dot(&thin.column(j)) < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    let mut r = q.tr_mul(a);
    for i in 0..rows.min(cols) {
        if r[(i, i)] < 0.0 {
            r.row_mut(i).neg_mut();
            q.column_mut(i).neg_mut();
        }
    }
    (q, r)
}

pub fn projector(u: &Matrix) -> Matrix {
    u * u.transpose()
}

pub fn bracket(a: &Matrix, b: &Matrix) -> Matrix {
    a * b - b * a
}

pub fn sym(z: &Matrix) -> Matrix {
    (z + z.transpose()) * 0.5
}

/// `π_P(Z) = [P, [P, Z_s]]`.
pub fn tangent_projection(p: &Matrix, z: &Matrix) -> Matrix {
    bracket(p, &bracket(p, &sym(z)))
}

/// Ambient tangent vector with compact coordinates `a` in frame `v`.
pub fn lift(v: &Matrix, k: usize, a: &Matrix) -> Matrix {
    let m = v.nrows();
    let mut block = Matrix::zeros(m, m);
    block.view_mut((k, 0), (m - k, k)).copy_from(a);
    block.view_mut((0, k), (k, m - k)).copy_from(&a.transpose());
    v * block * v.transpose()
}

/// `con_V(ξ)`: lower-left block of `Vᵀ ξ V`.
pub fn con(v: &Matrix, k: usize, xi: &Matrix) -> Matrix {
    let m = v.nrows();
    (v.transpose() * xi * v).view((k, 0), (m - k, k)).clone_owned()
}

/// `θ = V·diag(I_k, θ_A)`.
pub fn theta(v: &Matrix, k: usize, theta_a: &Matrix) -> Matrix {
    let m = v.nrows();
    let mut d = Matrix::identity(m, m);
    d.view_mut((k, k), (m - k, m - k)).copy_from(theta_a);
    v * d
}

/// `q_{θᵀ[ξ,P]θ}(1)`: Q factor of `I + θᵀ[ξ,P]θ`.
pub fn qr_map(th: &Matrix, xi: &Matrix, p: &Matrix) -> Matrix {
    let m = p.nrows();
    let omega = th.transpose() * bracket(xi, p) * th;
    q_factor(&(Matrix::identity(m, m) + omega))
}

/// `α_{P,θ}(ξ)` as a projector.
pub fn retraction(th: &Matrix, xi: &Matrix, p: &Matrix) -> Matrix {
    let q = qr_map(th, xi, p);
    th * &q * th.transpose() * p * th * q.transpose() * th.transpose()
}

/// `τ_{ξ,P,θ}(η)`.
pub fn transport(th: &Matrix, xi: &Matrix, p: &Matrix, eta: &Matrix) -> Matrix {
    let q = qr_map(th, xi, p);
    th * &q * th.transpose() * eta * th * q.transpose() * th.transpose()
}

pub fn frame_matrix(frame: &Frame) -> Matrix {
    frame.full()
}

/// Central difference of a scalar function.
pub fn central_diff(f: impl Fn(f64) -> f64, h: f64) -> f64 {
    (f(h) - f(-h)) / (2.0 * h)
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}
