//! Streaming subspace tracking with a forgetting factor.
//!
//! The state keeps the accumulated compact gradient `G` of the batch term in
//! a canonical frame: `U⊥` is rotated so that `G = [R; 0]` with `R` upper
//! triangular and nonnegative on the diagonal. Merging a sample's rank-one
//! gradient is a Givens sweep that updates `R` and rotates the columns of
//! `U⊥` in place, and the gradient step moves only `U` and the leading `p`
//! columns of `U⊥`. After the step `G` is carried to the new frame by vector
//! transport, which leaves its coordinates `[R; 0]` unchanged. A step therefore
//! costs `O(m·(m−k) + m·k²)` and never touches the stream history.

use crate::data::{mask_apply, Mask, MaskedColumn, MaskedObservation};
use crate::error::{dim_err, param_err, Error, Result};
use crate::geometry::{compact_qr, orth_complement, CompactQR, Frame, StiefelBasis};
use crate::linalg::{givens, qr_full, svd_thin, Matrix, Vector};
use crate::penalty::SmoothedPenalty;
use crate::solver::{armijo, cg_euclidean_y, riemannian_grad_compact, robust_pca, LineSearchConfig, SolverConfig};

/// Tracker state after initialization or a step.
#[derive(Debug, Clone)]
pub struct TrackerState {
    frame: Frame,
    /// Leading rows of the accumulated gradient in frame coordinates, padded
    /// with one zero work row when `m − k > k`.
    r: Matrix,
    w: f64,
    penalty: SmoothedPenalty,
    linesearch: LineSearchConfig,
    coord_cfg: SolverConfig,
    anchor: SampleAnchor,
    rule: StepRule,
    samples: usize,
}

/// How the step length along `−G'` is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    /// Armijo backtracking on the per-sample cost along `−G'`.
    Armijo,
    /// Armijo backtracking on the per-sample cost along the sample's own
    /// steepest descent direction `−g`; the accepted length is then used
    /// along `−G'`.
    SampleArmijo,
    /// Constant step length.
    Fixed(f64),
}

impl Default for StepRule {
    fn default() -> Self {
        StepRule::Fixed(DEFAULT_STEP)
    }
}

/// Default constant step length along `−G'`.
pub const DEFAULT_STEP: f64 = 0.01;

/// Point `l₀ = U·y₀` at which the per-sample gradient is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SampleAnchor {
    /// Least-squares projection `y₀ = Uᵀx₀` of the zero-filled sample.
    #[default]
    Projection,
    /// Robust coordinates `y₀ = argmin_y h(x̂ − 𝓐(U y))` in the current basis.
    Robust,
}

/// Per-sample output of [`tracker_step`].
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    /// Coordinates of the sample in the updated basis.
    pub y: Vector,
    /// Low-rank estimate `U·y`.
    pub l: Vector,
    /// Accepted step length along `−G'` (0 when the basis did not move).
    pub step: f64,
    /// The sample had no observed entries and was ignored.
    pub skipped: bool,
    /// The line search found no acceptable step; the basis was kept.
    pub stalled: bool,
}

fn leading_rows(m: usize, k: usize) -> usize {
    k.min(m - k)
}

fn work_rows(m: usize, k: usize) -> usize {
    (k + 1).min(m - k)
}

/// Applies the rotation `(c, s)` to rows `i`, `j` of `a`.
fn rotate_rows(a: &mut Matrix, i: usize, j: usize, c: f64, s: f64) {
    for col in 0..a.ncols() {
        let (x, y) = (a[(i, col)], a[(j, col)]);
        a[(i, col)] = c * x + s * y;
        a[(j, col)] = -s * x + c * y;
    }
}

/// Applies the rotation `(c, s)` to columns `i`, `j` of `a`, so that
/// `a·w` is unchanged when the same rotation is applied to rows of `w`.
fn rotate_cols(a: &mut Matrix, i: usize, j: usize, c: f64, s: f64) {
    for row in 0..a.nrows() {
        let (x, y) = (a[(row, i)], a[(row, j)]);
        a[(row, i)] = c * x + s * y;
        a[(row, j)] = -s * x + c * y;
    }
}

/// Retraction along the tangent direction with ambient block `head·d`,
/// where `head` has orthonormal columns orthogonal to `U` and `d` is
/// `p × k`. Returns `Z = [U | head]` and the Q factor `θ_M` of
/// `[[I, −t·dᵀ], [t·d, I]]`; the new basis is `Z·θ_M[:, :k]`.
fn block_retraction(u: &Matrix, head: &Matrix, d: &Matrix, t: f64) -> (Matrix, Matrix) {
    let (m, k) = u.shape();
    let p = head.ncols();
    let b = k + p;
    let mut mm = Matrix::identity(b, b);
    let td = d * t;
    mm.view_mut((0, k), (k, p)).copy_from(&(-td.transpose()));
    mm.view_mut((k, 0), (p, k)).copy_from(&td);
    let (theta_m, _) = qr_full(&mm);
    let mut z = Matrix::zeros(m, b);
    z.columns_mut(0, k).copy_from(u);
    z.columns_mut(k, p).copy_from(head);
    (z, theta_m)
}

/// `argmin_y ‖x̂ − 𝓐(U y)‖₂`, falling back to `Uᵀx₀` when the observed rows of
/// `U` are rank deficient.
fn observed_least_squares(u: &Matrix, x: &MaskedColumn) -> Vector {
    let fallback = || u.tr_mul(x.values());
    if x.is_full() {
        return fallback();
    }
    let k = u.ncols();
    let rows = x.observed();
    let u_obs = Matrix::from_fn(rows.len(), k, |r, c| u[(rows[r], c)]);
    let x_obs = Vector::from_fn(rows.len(), |r, _| x.values()[rows[r]]);
    match u_obs.tr_mul(&u_obs).cholesky() {
        Some(ch) if rows.len() >= k => {
            let y = ch.solve(&u_obs.tr_mul(&x_obs));
            if y.iter().all(|v| v.is_finite()) {
                y
            } else {
                fallback()
            }
        }
        _ => fallback(),
    }
}

/// Penalty of `x̂ − 𝓐(approx)` summed over observed rows.
fn column_cost(penalty: &SmoothedPenalty, x: &MaskedColumn, approx: &Vector) -> f64 {
    x.observed().iter().map(|&i| penalty.value(x.values()[i] - approx[i])).sum()
}

impl TrackerState {
    /// Builds a state from a basis and a compact batch gradient `G` given
    /// relative to `orth_complement(basis)`.
    pub fn from_gradient(basis: &StiefelBasis, g: &Matrix, w: f64, cfg: &SolverConfig, mu: f64) -> Result<Self> {
        if !(w > 0.0 && w < 1.0) {
            return Err(param_err(format!("forgetting factor must lie in (0, 1), got {w}")));
        }
        cfg.validate()?;
        let mut frame = orth_complement(basis)?;
        let (m, k) = (basis.ambient_dim(), basis.rank());
        if g.shape() != (m - k, k) {
            return Err(dim_err(format!("gradient must be {} x {k}, got {:?}", m - k, g.shape())));
        }
        let qr = compact_qr(&g.clone().into());
        frame.rotate_complement(qr.theta());
        let mut r = Matrix::zeros(work_rows(m, k), k);
        let p = leading_rows(m, k);
        r.rows_mut(0, p).copy_from(qr.r());
        Ok(Self {
            frame,
            r,
            w,
            penalty: cfg.penalty_at(mu)?,
            linesearch: cfg.linesearch,
            coord_cfg: cfg.clone(),
            anchor: SampleAnchor::default(),
            rule: StepRule::default(),
            samples: 0,
        })
    }

    pub fn basis(&self) -> StiefelBasis {
        self.frame.basis()
    }

    pub fn frame(&self) -> &Frame {
        &self.frame
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    pub fn mu(&self) -> f64 {
        self.penalty.mu()
    }

    /// Changes the smoothing parameter used by later steps.
    pub fn set_mu(&mut self, mu: f64) -> Result<()> {
        self.penalty = self.penalty.with_mu(mu)?;
        Ok(())
    }

    pub fn set_linesearch(&mut self, cfg: LineSearchConfig) -> Result<()> {
        cfg.validate()?;
        self.linesearch = cfg;
        Ok(())
    }

    pub fn anchor(&self) -> SampleAnchor {
        self.anchor
    }

    pub fn set_anchor(&mut self, anchor: SampleAnchor) {
        self.anchor = anchor;
    }

    pub fn step_rule(&self) -> StepRule {
        self.rule
    }

    pub fn set_step_rule(&mut self, rule: StepRule) -> Result<()> {
        if let StepRule::Fixed(t) = rule {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(param_err(format!("fixed step must be finite and >= 0, got {t}")));
            }
        }
        self.rule = rule;
        Ok(())
    }

    /// Number of samples merged so far (skipped samples excluded).
    pub fn samples(&self) -> usize {
        self.samples
    }

    /// Accumulated compact gradient `G` relative to [`Self::frame`].
    pub fn gradient(&self) -> Matrix {
        let (m, k) = (self.frame.ambient_dim(), self.frame.rank());
        let p = leading_rows(m, k);
        let mut g = Matrix::zeros(m - k, k);
        g.rows_mut(0, p).copy_from(&self.r.rows(0, p));
        g
    }

    /// QR factors of [`Self::gradient`]; `θ_G = I` in the canonical frame.
    pub fn gradient_qr(&self) -> CompactQR {
        let (m, k) = (self.frame.ambient_dim(), self.frame.rank());
        let p = leading_rows(m, k);
        CompactQR::from_parts_unchecked(Matrix::identity(m - k, m - k), self.r.rows(0, p).clone_owned())
    }

    /// Replaces `U` by `U·q` for an orthogonal `k × k` matrix `q`, re-expressing
    /// the accumulated gradient accordingly. The represented subspace and
    /// gradient are unchanged.
    pub fn rotate_basis(&mut self, q: &Matrix) -> Result<()> {
        let (m, k) = (self.frame.ambient_dim(), self.frame.rank());
        if q.shape() != (k, k) {
            return Err(dim_err(format!("rotation must be {k} x {k}, got {:?}", q.shape())));
        }
        if crate::linalg::orthonormality_defect(q) > 1e-10 {
            return Err(Error::Domain("rotation is not orthogonal".into()));
        }
        let p = leading_rows(m, k);
        let rq = self.r.rows(0, p) * q;
        let (theta, r_new) = qr_full(&rq);
        let u = self.frame.u() * q;
        let head = self.frame.u_perp().columns(0, p) * &theta;
        let mut u_perp = self.frame.u_perp().clone();
        u_perp.columns_mut(0, p).copy_from(&head);
        self.frame = Frame::from_parts(u, u_perp, 1e-8)?;
        self.r.fill(0.0);
        self.r.rows_mut(0, p).copy_from(&r_new.rows(0, p));
        Ok(())
    }

    /// Merge step `G ← (1−w)·G + w·u·vᵀ` with `u` in frame coordinates,
    /// implemented as a rank-one QR update whose rotations are absorbed into
    /// `U⊥`. The caller's coordinates of `u` refer to the frame before the call.
    pub fn merge(&mut self, u: &Vector, v: &Vector) -> Result<()> {
        let (m, k) = (self.frame.ambient_dim(), self.frame.rank());
        if u.len() != m - k || v.len() != k {
            return Err(dim_err(format!(
                "merge expects u of length {} and v of length {k}, got {} and {}",
                m - k,
                u.len(),
                v.len()
            )));
        }
        self.r *= 1.0 - self.w;
        let mut z = u * self.w;
        let h = self.r.nrows();
        let rows = m - k;
        let u_perp = self.frame.u_perp_mut();
        for i in (1..rows).rev() {
            if z[i] == 0.0 {
                continue;
            }
            let (c, s, rr) = givens(z[i - 1], z[i]);
            z[i - 1] = rr;
            z[i] = 0.0;
            if i < h {
                rotate_rows(&mut self.r, i - 1, i, c, s);
            }
            rotate_cols(u_perp, i - 1, i, c, s);
        }
        for j in 0..k {
            self.r[(0, j)] += z[0] * v[j];
        }
        for j in 0..k.min(h - 1) {
            let (c, s, _) = givens(self.r[(j, j)], self.r[(j + 1, j)]);
            if s != 0.0 || c < 0.0 {
                rotate_rows(&mut self.r, j, j + 1, c, s);
                rotate_cols(u_perp, j, j + 1, c, s);
                self.r[(j + 1, j)] = 0.0;
            }
        }
        for j in 0..leading_rows(m, k) {
            if self.r[(j, j)] < 0.0 {
                self.r.row_mut(j).neg_mut();
                u_perp.column_mut(j).neg_mut();
            }
        }
        Ok(())
    }

    /// Retracted basis (and optionally complement) for the step `t·H`,
    /// `H = −G`.
    fn retract(&self, t: f64, with_complement: bool) -> (Matrix, Option<Matrix>) {
        let (m, k) = (self.frame.ambient_dim(), self.frame.rank());
        let p = leading_rows(m, k);
        let head = self.frame.u_perp().columns(0, p).clone_owned();
        let (z, theta_m) = block_retraction(self.frame.u(), &head, &(-self.r.rows(0, p)), t);
        let u = &z * theta_m.columns(0, k);
        let u_perp = with_complement.then(|| {
            let mut up = self.frame.u_perp().clone();
            up.columns_mut(0, p).copy_from(&(&z * theta_m.columns(k, p)));
            up
        });
        (u, u_perp)
    }

    /// One tracking step for the sample `x`.
    pub fn step(&mut self, x: &MaskedColumn) -> Result<StepOutcome> {
        let (m, k) = (self.frame.ambient_dim(), self.frame.rank());
        if x.len() != m {
            return Err(dim_err(format!("sample has length {}, expected {m}", x.len())));
        }
        if x.observed().is_empty() {
            return Ok(StepOutcome {
                y: Vector::zeros(k),
                l: Vector::zeros(m),
                step: 0.0,
                skipped: true,
                stalled: false,
            });
        }
        let x0 = x.values();
        let y0 = match self.anchor {
            SampleAnchor::Projection => self.frame.u().tr_mul(x0),
            SampleAnchor::Robust => self.solve_coordinates(x)?.0,
        };
        let l0 = self.frame.u() * &y0;

        // Per-sample gradient g = u·vᵀ with u = −½U⊥ᵀe, v = y0, where
        // e = 𝓐*(∇h(x̂ − 𝓐(l0))). Its ambient column a = U⊥u = −½(I − UUᵀ)e.
        let mut e = Vector::zeros(m);
        for &i in x.observed() {
            e[i] = self.penalty.derivative(x0[i] - l0[i]);
        }
        let a = (&e - self.frame.u() * self.frame.u().tr_mul(&e)) * -0.5;
        let u = self.frame.u_perp().tr_mul(&a);
        self.merge(&u, &y0)?;
        self.samples += 1;

        // Slope of the per-sample cost along H = −G' is 2·aᵀ(U⊥H)y0.
        let p = leading_rows(m, k);
        let h_amb = -(self.frame.u_perp().columns(0, p) * self.r.rows(0, p));
        let slope = 2.0 * a.dot(&(&h_amb * &y0));
        let f0 = column_cost(&self.penalty, x, &l0);
        let mut stalled = false;
        let mut step = 0.0;
        let moving = self.r.iter().any(|&v| v != 0.0);
        let result = match self.rule {
            _ if !moving => None,
            StepRule::Fixed(t) => Some(Ok(t)),
            StepRule::Armijo if slope < 0.0 => Some(
                armijo(f0, slope, &self.linesearch, |t| {
                    let (ut, _) = self.retract(t, false);
                    Ok(column_cost(&self.penalty, x, &(&ut * ut.tr_mul(&l0))))
                })
                .map(|s| s.t),
            ),
            StepRule::SampleArmijo => {
                let a_norm = a.norm();
                let g_norm2 = a_norm * a_norm * y0.norm_squared();
                (g_norm2 > 0.0).then(|| {
                    let head = Matrix::from_column_slice(m, 1, (&a / a_norm).as_slice());
                    let d = Matrix::from_row_slice(1, k, (&y0 * -a_norm).as_slice());
                    armijo(f0, -2.0 * g_norm2, &self.linesearch, |t| {
                        let (z, theta_m) = block_retraction(self.frame.u(), &head, &d, t);
                        let ut = z * theta_m.columns(0, k);
                        Ok(column_cost(&self.penalty, x, &(&ut * ut.tr_mul(&l0))))
                    })
                    .map(|s| s.t)
                })
            }
            StepRule::Armijo => None,
        };
        if let Some(result) = result {
            match result {
                Ok(t) => step = t,
                Err(Error::Stalled { .. }) => stalled = true,
                Err(e) => return Err(e),
            }
        }
        if step > 0.0 {
            let (u_new, u_perp_new) = self.retract(step, true);
            let frame = Frame::from_parts(u_new, u_perp_new.expect("complement requested"), f64::INFINITY)?;
            let g_amb = frame.u_perp() * self.gradient();
            self.frame = frame;
            if self.basis().orthonormality_defect() > 1e-8 {
                let basis = StiefelBasis::orthonormalize(self.frame.u())?;
                let g = orth_complement(&basis)?.u_perp().tr_mul(&g_amb);
                let fresh = Self::from_gradient(&basis, &g, self.w, &self.coord_cfg, self.penalty.mu())?;
                self.frame = fresh.frame;
                self.r = fresh.r;
            }
        }

        let (y, l) = self.solve_coordinates(x)?;
        Ok(StepOutcome { y, l, step, skipped: false, stalled })
    }

    /// `argmin_y h(x̂ − 𝓐(U y))` by Euclidean CG from `Uᵀx₀`.
    fn solve_coordinates(&self, x: &MaskedColumn) -> Result<(Vector, Vector)> {
        let m = x.len();
        let mask = Mask::new(m, 1, x.observed().iter().map(|&i| (i, 0)).collect())?;
        let data: MaskedObservation = mask_apply(&Matrix::from_column_slice(m, 1, x.values().as_slice()), &mask)?;
        let basis = self.basis();
        let y0 = Matrix::from_column_slice(basis.rank(), 1, observed_least_squares(basis.matrix(), x).as_slice());
        let out = cg_euclidean_y(&basis, &data, &self.penalty, &y0, &self.coord_cfg)?;
        let y = out.y.column(0).clone_owned();
        let l = basis.matrix() * &y;
        Ok((y, l))
    }
}

/// Initializes a tracker from a batch: robust PCA on the batch, then the
/// compact batch gradient at the final estimate. Tracking keeps the last μ
/// of the schedule.
pub fn tracker_init(batch: &MaskedObservation, cfg: &SolverConfig, w: f64) -> Result<TrackerState> {
    let k = cfg.rank;
    if batch.ncols() < k {
        return Err(param_err(format!("initial batch needs at least k = {k} columns, got {}", batch.ncols())));
    }
    if !(w > 0.0 && w < 1.0) {
        return Err(param_err(format!("forgetting factor must lie in (0, 1), got {w}")));
    }
    let (m, n) = batch.shape();
    let mu = cfg.mu.mu_final();
    let (basis, l) = if n > k {
        let res = robust_pca(batch, cfg)?;
        (res.basis, res.l_hat)
    } else {
        // With exactly k columns the rank bound is not below min(m, n); the
        // batch itself spans the estimate.
        if k >= m {
            return Err(param_err(format!("rank bound k = {k} must be below m = {m}")));
        }
        let (u, _, _) = svd_thin(batch.values()).ok_or_else(|| Error::Domain("SVD of the batch failed".into()))?;
        let basis = StiefelBasis::orthonormalize(&u.columns(0, k).clone_owned())?;
        let l = basis.matrix() * basis.matrix().tr_mul(batch.values());
        (basis, l)
    };
    let frame = orth_complement(&basis)?;
    // Per-column average, on the same scale as a single sample's gradient.
    let g = riemannian_grad_compact(&frame, &l, batch, &cfg.penalty_at(mu)?)?.into_matrix() / n as f64;
    TrackerState::from_gradient(&basis, &g, w, cfg, mu)
}

/// Advances the tracker by one sample.
pub fn tracker_step(state: &mut TrackerState, x: &MaskedColumn) -> Result<StepOutcome> {
    state.step(x)
}

/// Largest principal angle between the spans of two bases, in `[0, π/2]`.
pub fn subspace_angle(u1: &StiefelBasis, u2: &StiefelBasis) -> Result<f64> {
    if u1.ambient_dim() != u2.ambient_dim() || u1.rank() != u2.rank() {
        return Err(dim_err(format!(
            "bases have shapes {}x{} and {}x{}",
            u1.ambient_dim(),
            u1.rank(),
            u2.ambient_dim(),
            u2.rank()
        )));
    }
    let a = u1.matrix();
    let b = u2.matrix();
    let cross = a.tr_mul(b);
    let (_, cos, _) = svd_thin(&cross).ok_or_else(|| Error::Domain("SVD failed".into()))?;
    let cos_min = cos.iter().copied().fold(f64::INFINITY, f64::min).min(1.0);
    if cos_min > std::f64::consts::FRAC_1_SQRT_2 {
        // Small angles: the sine form is accurate where acos is not.
        let resid = b - a * &cross;
        let (_, sin, _) = svd_thin(&resid).ok_or_else(|| Error::Domain("SVD failed".into()))?;
        Ok(sin[0].min(1.0).asin())
    } else {
        Ok(cos_min.max(0.0).acos())
    }
}
