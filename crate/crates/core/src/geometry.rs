//! Grassmannian kernels in compact coordinates.
//!
//! A point of the Grassmannian is the projector `P = UUᵀ` of an orthonormal
//! basis `U ∈ St(k, m)`. Completing `U` to an orthogonal frame
//! `V = [U | U⊥]` identifies every tangent vector `ξ` at `P` with the
//! `(m−k) × k` matrix `A = con_V(ξ)` through
//!
//! ```text
//! Vᵀ ξ V = [ 0  Aᵀ ]
//!          [ A  0  ]
//! ```
//!
//! All kernels here work on `U`, `U⊥` and `A`; no `m × m` matrix is formed.
//!
//! The retraction is the QR-based one: with `A = θ_A [R; 0]` (full QR) and
//! `θ = V·diag(I_k, θ_A)`, the new basis is `θ·diag(θ_M, I)·[I_k; 0]` where
//! `θ_M` is the Q factor of `M(tR) = [I  −tRᵀ; tR  I]`. The frame produced
//! alongside it, `Ṽ = θ·diag(θ_M, I)`, is the one in which transported
//! tangents have coordinates `θ_Aᵀ B`.

use crate::error::{dim_err, Error, Result};
use crate::linalg::{givens, inner, orthonormality_defect, qr_full, Matrix, Vector};

/// Tolerance for accepting a user-supplied basis as orthonormal.
pub const ORTHONORMAL_TOL: f64 = 1e-10;

/// Orthonormal `m × k` basis representing the subspace `span(U)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StiefelBasis {
    u: Matrix,
}

impl StiefelBasis {
    /// Wraps `u` after checking `uᵀu = I` within [`ORTHONORMAL_TOL`] and
    /// `1 ≤ k < m`.
    pub fn new(u: Matrix) -> Result<Self> {
        let (m, k) = u.shape();
        if k == 0 || k >= m {
            return Err(dim_err(format!("basis must satisfy 1 <= k < m, got {m} x {k}")));
        }
        let defect = orthonormality_defect(&u);
        if !(defect <= ORTHONORMAL_TOL) {
            return Err(Error::Domain(format!("basis columns are not orthonormal (defect {defect:e})")));
        }
        Ok(Self { u })
    }

    /// Orthonormalizes the columns of `a` (Q factor with nonnegative R diagonal).
    pub fn orthonormalize(a: &Matrix) -> Result<Self> {
        let (m, k) = a.shape();
        if k == 0 || k >= m {
            return Err(dim_err(format!("basis must satisfy 1 <= k < m, got {m} x {k}")));
        }
        Ok(Self { u: crate::linalg::orthonormalize(a) })
    }

    pub(crate) fn from_matrix_unchecked(u: Matrix) -> Self {
        Self { u }
    }

    /// First `k` columns of the identity.
    pub fn coordinate(m: usize, k: usize) -> Result<Self> {
        Self::new(Matrix::identity(m, k))
    }

    pub fn matrix(&self) -> &Matrix {
        &self.u
    }

    pub fn into_matrix(self) -> Matrix {
        self.u
    }

    pub fn ambient_dim(&self) -> usize {
        self.u.nrows()
    }

    pub fn rank(&self) -> usize {
        self.u.ncols()
    }

    /// `‖UᵀU − I‖_F`.
    pub fn orthonormality_defect(&self) -> f64 {
        orthonormality_defect(&self.u)
    }

    /// Dense projector `UUᵀ`. Diagnostic only; the algorithms never call it.
    pub fn projector(&self) -> Matrix {
        &self.u * self.u.transpose()
    }
}

/// Orthogonal frame `V = [U | U⊥]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    u: Matrix,
    u_perp: Matrix,
}

impl Frame {
    /// Assembles a frame from its blocks, checking `VᵀV = I` within `tol`.
    pub fn from_parts(u: Matrix, u_perp: Matrix, tol: f64) -> Result<Self> {
        let (m, k) = u.shape();
        if u_perp.shape() != (m, m - k) {
            return Err(dim_err(format!("complement must be {m} x {}, got {:?}", m - k, u_perp.shape())));
        }
        let frame = Self { u, u_perp };
        let defect = orthonormality_defect(&frame.full());
        if !(defect <= tol) {
            return Err(Error::Domain(format!("frame is not orthogonal (defect {defect:e})")));
        }
        Ok(frame)
    }

    pub fn u(&self) -> &Matrix {
        &self.u
    }

    pub fn u_perp(&self) -> &Matrix {
        &self.u_perp
    }

    pub fn basis(&self) -> StiefelBasis {
        StiefelBasis::from_matrix_unchecked(self.u.clone())
    }

    pub fn ambient_dim(&self) -> usize {
        self.u.nrows()
    }

    pub fn rank(&self) -> usize {
        self.u.ncols()
    }

    /// The full `m × m` matrix `[U | U⊥]`.
    pub fn full(&self) -> Matrix {
        let (m, k) = self.u.shape();
        let mut v = Matrix::zeros(m, m);
        v.columns_mut(0, k).copy_from(&self.u);
        v.columns_mut(k, m - k).copy_from(&self.u_perp);
        v
    }

    /// Tangent vector in ambient coordinates, `U⊥ A Uᵀ + U Aᵀ U⊥ᵀ`.
    /// Diagnostic only.
    pub fn tangent_to_ambient(&self, a: &CompactTangent) -> Matrix {
        let x = &self.u_perp * a.matrix() * self.u.transpose();
        &x + x.transpose()
    }

    /// Replaces `U⊥` by `U⊥·q` for an orthogonal `(m−k) × (m−k)` matrix `q`.
    /// Compact coordinates relative to the new frame are `qᵀ A`.
    pub fn rotate_complement(&mut self, q: &Matrix) {
        self.u_perp = &self.u_perp * q;
    }

    pub(crate) fn u_perp_mut(&mut self) -> &mut Matrix {
        &mut self.u_perp
    }
}

/// Compact coordinates `A = con_V(ξ)` of a tangent vector, `(m−k) × k`.
#[derive(Debug, Clone, PartialEq)]
pub struct CompactTangent(Matrix);

impl CompactTangent {
    pub fn new(a: Matrix) -> Self {
        Self(a)
    }

    pub fn zeros(m: usize, k: usize) -> Self {
        Self(Matrix::zeros(m - k, k))
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    /// Riemannian inner product of the represented tangents. The metric is
    /// the restriction of the Frobenius product, so `⟨ξ, η⟩ = 2·tr(AᵀB)`.
    pub fn metric(&self, other: &CompactTangent) -> f64 {
        2.0 * inner(&self.0, &other.0)
    }
}

impl From<Matrix> for CompactTangent {
    fn from(a: Matrix) -> Self {
        Self(a)
    }
}

/// Full QR factors `A = θ_A·[R; 0]` of a compact tangent.
///
/// `r` holds the `min(m−k, k) × k` upper trapezoidal block with nonnegative
/// diagonal; the zero rows below it are implicit.
#[derive(Debug, Clone, PartialEq)]
pub struct CompactQR {
    theta: Matrix,
    r: Matrix,
}

impl CompactQR {
    pub fn theta(&self) -> &Matrix {
        &self.theta
    }

    pub fn r(&self) -> &Matrix {
        &self.r
    }

    /// QR factors of the zero tangent: `(I, 0)`.
    pub fn zero(rows: usize, k: usize) -> Self {
        Self { theta: Matrix::identity(rows, rows), r: Matrix::zeros(rows.min(k), k) }
    }

    /// Assembles factors without checks. Used when the factors are known by
    /// construction (e.g. canonical frames where `θ = I`).
    pub(crate) fn from_parts_unchecked(theta: Matrix, r: Matrix) -> Self {
        Self { theta, r }
    }

    /// `θ_A·[R; 0]`.
    pub fn reconstruct(&self) -> Matrix {
        let p = self.r.nrows();
        self.theta.columns(0, p) * &self.r
    }

    /// Factors of `−A`: the same `R` with the first `p` columns of `θ_A`
    /// negated, preserving the sign convention.
    pub fn negated(&self) -> Self {
        let mut theta = self.theta.clone();
        for i in 0..self.r.nrows() {
            theta.column_mut(i).neg_mut();
        }
        Self { theta, r: self.r.clone() }
    }

    /// Factors of `s·A` for `s ≥ 0`.
    pub fn scaled(&self, s: f64) -> Self {
        debug_assert!(s >= 0.0);
        Self { theta: self.theta.clone(), r: &self.r * s }
    }
}

/// Completes `U` to an orthogonal frame via a full QR of `U`. The `U` block
/// is copied unchanged.
pub fn orth_complement(basis: &StiefelBasis) -> Result<Frame> {
    let (m, k) = basis.u.shape();
    if k == 0 || k >= m {
        return Err(dim_err(format!("no orthogonal complement for k = {k}, m = {m}")));
    }
    let (q, _) = qr_full(&basis.u);
    Ok(Frame { u: basis.u.clone(), u_perp: q.columns(k, m - k).clone_owned() })
}

/// `con_V(π_P(Z)) = U⊥ᵀ·½(Z + Zᵀ)·U`.
pub fn project_to_compact(frame: &Frame, z: &Matrix) -> Result<CompactTangent> {
    let m = frame.ambient_dim();
    if z.shape() != (m, m) {
        return Err(dim_err(format!("expected {m} x {m} ambient matrix, got {:?}", z.shape())));
    }
    let zu = z * &frame.u;
    let ztu = z.tr_mul(&frame.u);
    Ok(CompactTangent(frame.u_perp.tr_mul(&(zu + ztu)) * 0.5))
}

/// Full QR of a compact tangent with the sign convention `diag(R) ≥ 0`.
pub fn compact_qr(a: &CompactTangent) -> CompactQR {
    let (rows, k) = a.0.shape();
    let (theta, rfull) = qr_full(&a.0);
    let p = rows.min(k);
    CompactQR { theta, r: rfull.rows(0, p).clone_owned() }
}

fn check_qr_against_frame(frame: &Frame, qr: &CompactQR) -> Result<()> {
    let (m, k) = frame.u.shape();
    if qr.theta.shape() != (m - k, m - k) || qr.r.ncols() != k {
        return Err(dim_err(format!(
            "QR factors ({:?}, {:?}) do not match frame with m = {m}, k = {k}",
            qr.theta.shape(),
            qr.r.shape()
        )));
    }
    Ok(())
}

/// Partially evaluated retraction along a fixed direction: everything that
/// does not depend on the step length is computed once, so each trial step
/// costs `O(m·k²)` plus a `2k × 2k` QR.
#[derive(Debug, Clone)]
pub struct RetractionPath<'a> {
    frame: &'a Frame,
    qr: &'a CompactQR,
    /// `U⊥·θ_A[:, :p]`.
    rotated_head: Matrix,
}

impl<'a> RetractionPath<'a> {
    pub fn new(frame: &'a Frame, qr: &'a CompactQR) -> Result<Self> {
        check_qr_against_frame(frame, qr)?;
        let p = qr.r.nrows();
        let rotated_head = &frame.u_perp * qr.theta.columns(0, p);
        Ok(Self { frame, qr, rotated_head })
    }

    fn uses_small_block(&self) -> bool {
        let (m, k) = self.frame.u.shape();
        m >= 2 * k
    }

    /// Q factor of `M(tR)`.
    fn theta_m(&self, t: f64) -> Matrix {
        let k = self.frame.rank();
        let mut mm = Matrix::identity(2 * k, 2 * k);
        let tr = &self.qr.r * t;
        mm.view_mut((k, 0), (k, k)).copy_from(&tr);
        mm.view_mut((0, k), (k, k)).copy_from(&(-tr.transpose()));
        qr_full(&mm).0
    }

    /// `θᵀ`-rotated generator `I + tΩ'` for the full-frame route.
    fn full_q(&self, t: f64) -> Matrix {
        let (m, k) = self.frame.u.shape();
        let p = self.qr.r.nrows();
        let mut g = Matrix::identity(m, m);
        let tr = &self.qr.r * t;
        g.view_mut((k, 0), (p, k)).copy_from(&tr);
        g.view_mut((0, k), (k, p)).copy_from(&(-tr.transpose()));
        qr_full(&g).0
    }

    /// New basis `Ũ(t)`.
    pub fn basis(&self, t: f64) -> StiefelBasis {
        let k = self.frame.rank();
        if self.uses_small_block() {
            let tm = self.theta_m(t);
            let u = &self.frame.u * tm.view((0, 0), (k, k)) + &self.rotated_head * tm.view((k, 0), (k, k));
            StiefelBasis::from_matrix_unchecked(u)
        } else {
            let q = self.full_q(t);
            StiefelBasis::from_matrix_unchecked(self.apply_theta(&q.columns(0, k).clone_owned()))
        }
    }

    /// `θ·x` for `x` with `m` rows, without forming `θ`.
    fn apply_theta(&self, x: &Matrix) -> Matrix {
        let (m, k) = self.frame.u.shape();
        let top = x.rows(0, k);
        let bottom = x.rows(k, m - k);
        &self.frame.u * top + &self.frame.u_perp * (&self.qr.theta * bottom)
    }

    /// New frame `Ṽ(t) = θ·diag(θ_M, I)`.
    pub fn frame(&self, t: f64) -> Frame {
        let (m, k) = self.frame.u.shape();
        if self.uses_small_block() {
            let tm = self.theta_m(t);
            let u = &self.frame.u * tm.view((0, 0), (k, k)) + &self.rotated_head * tm.view((k, 0), (k, k));
            let mut u_perp = Matrix::zeros(m, m - k);
            let head = &self.frame.u * tm.view((0, k), (k, k)) + &self.rotated_head * tm.view((k, k), (k, k));
            u_perp.columns_mut(0, k).copy_from(&head);
            if m > 2 * k {
                let tail = &self.frame.u_perp * self.qr.theta.columns(k, m - 2 * k);
                u_perp.columns_mut(k, m - 2 * k).copy_from(&tail);
            }
            Frame { u, u_perp }
        } else {
            let q = self.full_q(t);
            let v = self.apply_theta(&q);
            Frame { u: v.columns(0, k).clone_owned(), u_perp: v.columns(k, m - k).clone_owned() }
        }
    }
}

/// Retracted basis `Ũ` for the step `t·ξ`, where `qr` factors `con_V(ξ)`.
pub fn retract(frame: &Frame, qr: &CompactQR, t: f64) -> Result<StiefelBasis> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::Parameter(format!("step must be finite and >= 0, got {t}")));
    }
    Ok(RetractionPath::new(frame, qr)?.basis(t))
}

/// Retracted frame `Ṽ` for the step `t·ξ`; its first block is
/// [`retract`]'s basis.
pub fn retract_frame(frame: &Frame, qr: &CompactQR, t: f64) -> Result<Frame> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::Parameter(format!("step must be finite and >= 0, got {t}")));
    }
    Ok(RetractionPath::new(frame, qr)?.frame(t))
}

/// Vector transport along the retraction defined by `qr`, in compact
/// coordinates of the retracted frame: `θ_Aᵀ B`.
pub fn transport(qr: &CompactQR, b: &CompactTangent) -> Result<CompactTangent> {
    if b.0.nrows() != qr.theta.nrows() {
        return Err(dim_err(format!("tangent has {} rows, transport expects {}", b.0.nrows(), qr.theta.nrows())));
    }
    Ok(CompactTangent(qr.theta.tr_mul(&b.0)))
}

/// QR factors of `θ_A·[R; 0] + u·vᵀ` by Givens rotations in
/// `O((m−k)² + (m−k)·k)` work.
pub fn qr_rank_one_update(qr: &CompactQR, u: &Vector, v: &Vector) -> Result<CompactQR> {
    let rows = qr.theta.nrows();
    let k = qr.r.ncols();
    if u.len() != rows || v.len() != k {
        return Err(dim_err(format!(
            "rank-one update expects u of length {rows} and v of length {k}, got {} and {}",
            u.len(),
            v.len()
        )));
    }
    let mut theta = qr.theta.clone();
    // Upper Hessenberg work array: rows 0..=min(k, rows-1) may become nonzero.
    let h_rows = (k + 1).min(rows);
    let mut r = Matrix::zeros(h_rows, k);
    r.rows_mut(0, qr.r.nrows()).copy_from(&qr.r);

    let mut w = theta.tr_mul(u);
    let rotate_theta = |theta: &mut Matrix, i: usize, c: f64, s: f64| {
        for row in 0..rows {
            let a = theta[(row, i)];
            let b = theta[(row, i + 1)];
            theta[(row, i)] = c * a + s * b;
            theta[(row, i + 1)] = -s * a + c * b;
        }
    };
    let rotate_r = |r: &mut Matrix, i: usize, c: f64, s: f64| {
        for col in 0..k {
            let a = r[(i, col)];
            let b = r[(i + 1, col)];
            r[(i, col)] = c * a + s * b;
            r[(i + 1, col)] = -s * a + c * b;
        }
    };

    // Reduce w to a multiple of e1 from the bottom up.
    for i in (0..rows.saturating_sub(1)).rev() {
        if w[i + 1] == 0.0 {
            continue;
        }
        let (c, s, norm) = givens(w[i], w[i + 1]);
        w[i] = norm;
        w[i + 1] = 0.0;
        rotate_theta(&mut theta, i, c, s);
        if i + 1 < h_rows {
            rotate_r(&mut r, i, c, s);
        }
    }

    for col in 0..k {
        r[(0, col)] += w[0] * v[col];
    }

    // Restore triangular form.
    for i in 0..(h_rows - 1).min(k) {
        let b = r[(i + 1, i)];
        if b == 0.0 {
            continue;
        }
        let (c, s, _) = givens(r[(i, i)], b);
        rotate_r(&mut r, i, c, s);
        rotate_theta(&mut theta, i, c, s);
        r[(i + 1, i)] = 0.0;
    }

    let p = rows.min(k);
    for i in 0..p {
        if r[(i, i)] < 0.0 {
            r.row_mut(i).neg_mut();
            theta.column_mut(i).neg_mut();
        }
    }
    Ok(CompactQR { theta, r: r.rows(0, p).clone_owned() })
}
