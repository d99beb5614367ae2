//! Subspace step: CG on the Grassmannian for `f₁(P) = h(X̂ − 𝓐(P·L))`.

use crate::data::MaskedObservation;
use crate::error::{dim_err, Error, Result};
use crate::geometry::{
    compact_qr, orth_complement, transport, CompactQR, CompactTangent, Frame, RetractionPath, StiefelBasis,
};
use crate::linalg::Matrix;
use crate::penalty::SmoothedPenalty;

use super::linesearch::{armijo, LineSearchConfig, Step};
use super::{conjugate_beta, rounding_floor, SolverConfig, Termination};

/// Orthonormality defect above which the iterate is re-orthonormalized.
const DRIFT_TOL: f64 = 1e-8;

/// Result of [`cg_grassmann`].
#[derive(Debug, Clone)]
pub struct SubspaceOutcome {
    pub basis: StiefelBasis,
    /// Starting cost followed by the cost after every accepted step.
    pub costs: Vec<f64>,
    pub iterations: usize,
    pub termination: Termination,
}

fn check_target(u: &Matrix, target: &Matrix, data: &MaskedObservation) -> Result<()> {
    let (m, n) = data.shape();
    if u.nrows() != m || target.shape() != (m, n) {
        return Err(dim_err(format!(
            "basis {:?} and target {:?} do not match data {m} x {n}",
            u.shape(),
            target.shape()
        )));
    }
    Ok(())
}

/// `f₁(UUᵀ) = h(X̂ − 𝓐(U·UᵀL))` over observed entries.
pub fn subspace_cost(
    basis: &StiefelBasis,
    target: &Matrix,
    data: &MaskedObservation,
    penalty: &SmoothedPenalty,
) -> Result<f64> {
    let u = basis.matrix();
    check_target(u, target, data)?;
    let approx = u * u.tr_mul(target);
    penalty.eval_masked(&data.residual(&approx), data.mask())
}

/// Compact Riemannian gradient `con_V(grad f₁)` at the frame's basis.
///
/// With `E = 𝓐*(∇h(X̂ − 𝓐(UUᵀL)))` the Euclidean gradient is `−E·Lᵀ`, so
/// the compact gradient is `−½·U⊥ᵀ(E·(LᵀU) + L·(EᵀU))`. No `m × m` matrix
/// is formed.
pub fn riemannian_grad_compact(
    frame: &Frame,
    target: &Matrix,
    data: &MaskedObservation,
    penalty: &SmoothedPenalty,
) -> Result<CompactTangent> {
    let u = frame.u();
    check_target(u, target, data)?;
    let approx = u * u.tr_mul(target);
    let e = penalty.grad_masked(&data.residual(&approx), data.mask())?;
    let ltu = target.tr_mul(u);
    let etu = e.tr_mul(u);
    let sym = e * ltu + target * etu;
    Ok(CompactTangent::new(frame.u_perp().tr_mul(&sym) * -0.5))
}

/// Armijo backtracking along the retraction curve `t ↦ α(tξ)`, where `qr`
/// factors `con_V(ξ)` and `slope = ⟨Γ, ξ⟩`.
pub fn grassmann_backtracking<F>(
    frame: &Frame,
    qr: &CompactQR,
    cost_at_p: f64,
    slope: f64,
    cfg: &LineSearchConfig,
    mut cost: F,
) -> Result<Step>
where
    F: FnMut(&StiefelBasis) -> Result<f64>,
{
    let path = RetractionPath::new(frame, qr)?;
    armijo(cost_at_p, slope, cfg, |t| cost(&path.basis(t)))
}

fn relative_decrease(prev: f64, next: f64) -> f64 {
    (prev - next) / prev.abs().max(f64::MIN_POSITIVE)
}

/// Nonlinear CG on the Grassmannian minimizing [`subspace_cost`] from `start`.
pub fn cg_grassmann(
    start: &StiefelBasis,
    target: &Matrix,
    data: &MaskedObservation,
    penalty: &SmoothedPenalty,
    cfg: &SolverConfig,
) -> Result<SubspaceOutcome> {
    let cost_of = |b: &StiefelBasis| subspace_cost(b, target, data, penalty);
    let mut frame = orth_complement(start)?;
    let mut f = cost_of(start)?;
    let mut costs = vec![f];
    let mut g = riemannian_grad_compact(&frame, target, data, penalty)?;
    let mut h = CompactTangent::new(-g.matrix());
    let mut steepest = true;
    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;

    let floor = rounding_floor(data, penalty);

    while iterations < cfg.inner_max_iters {
        let gg = g.metric(&g);
        if gg == 0.0 || f <= floor {
            termination = Termination::Converged;
            break;
        }
        let mut slope = g.metric(&h);
        if !(slope < 0.0) {
            h = CompactTangent::new(-g.matrix());
            slope = -gg;
            steepest = true;
        }
        let qr = compact_qr(&h);
        let step = match grassmann_backtracking(&frame, &qr, f, slope, &cfg.linesearch, cost_of) {
            Ok(step) => step,
            Err(Error::Stalled { .. }) if !steepest => {
                h = CompactTangent::new(-g.matrix());
                steepest = true;
                continue;
            }
            Err(Error::Stalled { .. }) => {
                termination = Termination::Stalled;
                break;
            }
            Err(e) => return Err(e),
        };
        iterations += 1;

        let mut next = RetractionPath::new(&frame, &qr)?.frame(step.t);
        let mut f_next = step.cost;
        let mut drifted = false;
        if next.basis().orthonormality_defect() > DRIFT_TOL {
            let basis = StiefelBasis::orthonormalize(next.u())?;
            next = orth_complement(&basis)?;
            f_next = cost_of(&basis)?;
            drifted = true;
        }

        let g_next = riemannian_grad_compact(&next, target, data, penalty)?;
        let beta = if drifted {
            None
        } else {
            let tau_g = transport(&qr, &g)?;
            let tau_h = transport(&qr, &h)?;
            conjugate_beta(cfg.beta, g_next.matrix(), g.matrix(), tau_g.matrix(), tau_h.matrix()).map(|b| (b, tau_h))
        };
        h = match beta {
            Some((b, tau_h)) => {
                steepest = false;
                CompactTangent::new(tau_h.matrix() * b - g_next.matrix())
            }
            None => {
                steepest = true;
                CompactTangent::new(-g_next.matrix())
            }
        };

        let decrease = relative_decrease(f, f_next);
        frame = next;
        g = g_next;
        f = f_next;
        costs.push(f);
        if decrease < cfg.rel_tol {
            termination = Termination::Converged;
            break;
        }
    }

    Ok(SubspaceOutcome { basis: frame.basis(), costs, iterations, termination })
}
