//! Batch robust PCA by alternating minimization.
//!
//! Starting from a truncated SVD of the zero-filled data, each outer
//! iteration improves the subspace with CG on the Grassmannian (holding the
//! current estimate `L` as the projection target), refits the coordinates
//! with Euclidean CG, then shrinks μ by the schedule factor.

mod euclidean;
mod grassmann;
pub mod linesearch;

use std::fmt;
use std::str::FromStr;

use crate::data::MaskedObservation;
use crate::error::{param_err, Error, Result};
use crate::geometry::StiefelBasis;
use crate::linalg::{inner, svd_thin, Matrix};
use crate::penalty::{MuSchedule, PenaltyKind, SmoothedPenalty};

pub use euclidean::{cg_euclidean_y, coordinate_cost, coordinate_grad, CoordinateOutcome};
pub use grassmann::{cg_grassmann, grassmann_backtracking, riemannian_grad_compact, subspace_cost, SubspaceOutcome};
pub use linesearch::{armijo, LineSearchConfig, Step};

/// Direction-mixing rule for nonlinear CG.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BetaRule {
    FletcherReeves,
    #[default]
    HestenesStiefel,
}

impl fmt::Display for BetaRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BetaRule::FletcherReeves => "fr",
            BetaRule::HestenesStiefel => "hs",
        })
    }
}

impl FromStr for BetaRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fr" | "fletcher-reeves" => Ok(BetaRule::FletcherReeves),
            "hs" | "hestenes-stiefel" => Ok(BetaRule::HestenesStiefel),
            other => Err(param_err(format!("unknown beta rule `{other}` (expected fr or hs)"))),
        }
    }
}

/// CG mixing coefficient, or `None` when the direction should restart from
/// steepest descent.
///
/// `g_new` is the new gradient, `g_old` the previous one in its own frame,
/// and `tau_g_old`, `tau_h` the previous gradient and direction carried into
/// the new frame (identical to the untransported ones in flat space).
///
/// * FR: `⟨g_new, g_new⟩ / ⟨g_old, g_old⟩`
/// * HS: `⟨g_new, g_new − τg_old⟩ / ⟨τh, g_new − τg_old⟩`, restarted when
///   the denominator is negligible against the numerator or the value is
///   negative.
pub fn conjugate_beta(
    rule: BetaRule,
    g_new: &Matrix,
    g_old: &Matrix,
    tau_g_old: &Matrix,
    tau_h: &Matrix,
) -> Option<f64> {
    let beta = match rule {
        BetaRule::FletcherReeves => {
            let den = inner(g_old, g_old);
            if den == 0.0 {
                return None;
            }
            inner(g_new, g_new) / den
        }
        BetaRule::HestenesStiefel => {
            let y = g_new - tau_g_old;
            let num = inner(g_new, &y);
            let den = inner(tau_h, &y);
            if !(den.abs() >= 1e-14 * num.abs()) || den == 0.0 {
                return None;
            }
            num / den
        }
    };
    (beta.is_finite() && beta >= 0.0).then_some(beta)
}

/// How an inner CG run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Relative cost decrease fell below the tolerance, or the gradient vanished.
    Converged,
    /// Iteration budget exhausted.
    MaxIterations,
    /// The line search could not find an acceptable step even along the
    /// steepest descent direction.
    Stalled,
}

/// Configuration of the alternating scheme and its inner solvers.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Upper bound `k` on the rank.
    pub rank: usize,
    /// Smoothing schedule; its length is the number of outer iterations.
    pub mu: MuSchedule,
    pub penalty: PenaltyKind,
    /// Exponent for `PenaltyKind::LpNorm`.
    pub p: f64,
    pub beta: BetaRule,
    pub inner_max_iters: usize,
    /// Inner CG stops once `(f_prev − f)/max(f_prev, ε) < rel_tol`.
    pub rel_tol: f64,
    pub linesearch: LineSearchConfig,
}

impl SolverConfig {
    /// Config with default inner-solver settings (HS rule, 50 inner
    /// iterations, relative tolerance 1e−8, Armijo with `t_init = 1`,
    /// `ρ = 0.5`, `c = 1e−4`).
    pub fn new(rank: usize, penalty: PenaltyKind, p: f64, mu: MuSchedule) -> Self {
        Self {
            rank,
            mu,
            penalty,
            p,
            beta: BetaRule::default(),
            inner_max_iters: 50,
            rel_tol: 1e-8,
            linesearch: LineSearchConfig::default(),
        }
    }

    /// Default μ range for each penalty: lpnorm 0.9 → 1e−4 (p = 0.5),
    /// logarithm 2 → 0.005, atan 2 → 0.05.
    pub fn default_mu_range(kind: PenaltyKind) -> (f64, f64) {
        match kind {
            PenaltyKind::LpNorm => (0.9, 1e-4),
            PenaltyKind::Logarithm => (2.0, 0.005),
            PenaltyKind::Atan => (2.0, 0.05),
        }
    }

    /// Config for `kind` with its default μ range over `outer_iters` iterations.
    pub fn with_defaults(rank: usize, kind: PenaltyKind, outer_iters: usize) -> Result<Self> {
        let (mu0, mu1) = Self::default_mu_range(kind);
        let mu = if outer_iters == 1 { MuSchedule::constant(mu0, 1)? } else { MuSchedule::new(mu0, mu1, outer_iters)? };
        Ok(Self::new(rank, kind, 0.5, mu))
    }

    pub fn outer_iters(&self) -> usize {
        self.mu.steps()
    }

    /// Penalty at smoothing level `mu`.
    pub fn penalty_at(&self, mu: f64) -> Result<SmoothedPenalty> {
        SmoothedPenalty::new(self.penalty, mu, self.p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 {
            return Err(param_err("rank bound must be at least 1"));
        }
        if self.inner_max_iters == 0 {
            return Err(param_err("inner_max_iters must be at least 1"));
        }
        if !(self.rel_tol >= 0.0) {
            return Err(param_err(format!("rel_tol must be >= 0, got {}", self.rel_tol)));
        }
        self.linesearch.validate()?;
        self.penalty_at(self.mu.mu0())?;
        Ok(())
    }
}

/// Costs recorded during one outer iteration (fixed μ).
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseTrace {
    pub mu: f64,
    /// Cost before the subspace step followed by the cost after each accepted CG step.
    pub subspace_costs: Vec<f64>,
    pub subspace_termination: Termination,
    /// Cost at the projected coordinates followed by each accepted CG step.
    pub coordinate_costs: Vec<f64>,
    pub coordinate_termination: Termination,
}

impl PhaseTrace {
    /// All costs of this phase in order. The coordinate step starts from
    /// `UᵀL`, whose cost equals the final subspace cost, so the sequence is
    /// non-increasing.
    pub fn costs(&self) -> Vec<f64> {
        self.subspace_costs.iter().chain(self.coordinate_costs.iter()).copied().collect()
    }

    /// Largest increase between consecutive recorded costs (≤ 0 when monotone).
    pub fn max_increase(&self) -> f64 {
        self.costs().windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Output of [`robust_pca`].
#[derive(Debug, Clone)]
pub struct DecompositionResult {
    pub basis: StiefelBasis,
    /// `k × n` coordinates.
    pub y: Matrix,
    /// `L̂ = U·Y`.
    pub l_hat: Matrix,
    /// `X̂ − 𝓐(L̂)` on observed entries, zero elsewhere.
    pub s_hat: Matrix,
    pub cost_trace: Vec<PhaseTrace>,
    pub mu_trace: Vec<f64>,
    /// Set when an inner solve ended with a stalled line search.
    pub stalled: bool,
}

impl DecompositionResult {
    /// `‖L − L̂‖_F / ‖L‖_F`.
    pub fn relative_error(&self, l_true: &Matrix) -> f64 {
        (l_true - &self.l_hat).norm() / l_true.norm()
    }

    /// True when every fixed-μ cost sequence is non-increasing.
    pub fn is_monotone(&self) -> bool {
        self.cost_trace.iter().all(|p| p.max_increase() <= 0.0)
    }
}

/// Cost below which a masked residual is indistinguishable from rounding.
///
/// Each observed residual is taken to be at most `64·ε·max|X|`.
pub(crate) fn rounding_floor(data: &MaskedObservation, penalty: &SmoothedPenalty) -> f64 {
    let scale = data.values().amax();
    data.mask().len() as f64 * penalty.value(64.0 * f64::EPSILON * scale)
}

/// Initial basis from the top-`k` left singular vectors of the zero-filled
/// data `X₀`, with coordinates `Y₀ = U₀ᵀX₀`.
pub fn init_svd(data: &MaskedObservation, k: usize) -> Result<(StiefelBasis, Matrix)> {
    let (m, n) = data.shape();
    if k == 0 || k >= m.min(n) {
        return Err(param_err(format!("rank bound must satisfy 0 < k < min(m, n) = {}, got {k}", m.min(n))));
    }
    if data.mask().is_empty() {
        return Err(param_err("no observed entries"));
    }
    let x0 = data.values();
    let (u, _, _) = svd_thin(x0).ok_or_else(|| Error::Domain("SVD of the zero-filled data failed".into()))?;
    let u0 = u.columns(0, k).clone_owned();
    let basis = StiefelBasis::orthonormalize(&u0)?;
    let y0 = basis.matrix().tr_mul(x0);
    Ok((basis, y0))
}

/// Alternating robust PCA.
pub fn robust_pca(data: &MaskedObservation, cfg: &SolverConfig) -> Result<DecompositionResult> {
    cfg.validate()?;
    let (mut basis, mut y) = init_svd(data, cfg.rank)?;
    let mut cost_trace = Vec::with_capacity(cfg.outer_iters());
    let mut mu_trace = Vec::with_capacity(cfg.outer_iters());
    let mut stalled = false;

    for mu in cfg.mu.values() {
        let penalty = cfg.penalty_at(mu)?;
        let target = basis.matrix() * &y;

        let sub = cg_grassmann(&basis, &target, data, &penalty, cfg)?;
        basis = sub.basis;

        let y_start = basis.matrix().tr_mul(&target);
        let coord = cg_euclidean_y(&basis, data, &penalty, &y_start, cfg)?;
        y = coord.y;

        stalled |= sub.termination == Termination::Stalled || coord.termination == Termination::Stalled;
        mu_trace.push(mu);
        cost_trace.push(PhaseTrace {
            mu,
            subspace_costs: sub.costs,
            subspace_termination: sub.termination,
            coordinate_costs: coord.costs,
            coordinate_termination: coord.termination,
        });
    }

    let l_hat = basis.matrix() * &y;
    let s_hat = data.residual(&l_hat);
    Ok(DecompositionResult { basis, y, l_hat, s_hat, cost_trace, mu_trace, stalled })
}
