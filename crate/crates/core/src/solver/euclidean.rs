//! Coordinate step: Euclidean CG for `f₂(Y) = h(X̂ − 𝓐(U·Y))`.

use crate::data::MaskedObservation;
use crate::error::{dim_err, Error, Result};
use crate::geometry::StiefelBasis;
use crate::linalg::{inner, Matrix};
use crate::penalty::SmoothedPenalty;

use super::linesearch::armijo;
use super::{conjugate_beta, rounding_floor, SolverConfig, Termination};

/// Result of [`cg_euclidean_y`].
#[derive(Debug, Clone)]
pub struct CoordinateOutcome {
    pub y: Matrix,
    /// Starting cost followed by the cost after every accepted step.
    pub costs: Vec<f64>,
    pub iterations: usize,
    pub termination: Termination,
}

fn check_coords(basis: &StiefelBasis, y: &Matrix, data: &MaskedObservation) -> Result<()> {
    let (m, n) = data.shape();
    if basis.ambient_dim() != m || y.shape() != (basis.rank(), n) {
        return Err(dim_err(format!(
            "basis {m}x{} and coordinates {:?} do not match data {m} x {n}",
            basis.rank(),
            y.shape()
        )));
    }
    Ok(())
}

pub fn coordinate_cost(
    basis: &StiefelBasis,
    y: &Matrix,
    data: &MaskedObservation,
    penalty: &SmoothedPenalty,
) -> Result<f64> {
    check_coords(basis, y, data)?;
    penalty.eval_masked(&data.residual(&(basis.matrix() * y)), data.mask())
}

/// `∇f₂(Y) = −Uᵀ𝓐*(∇h(X̂ − 𝓐(UY)))`.
pub fn coordinate_grad(
    basis: &StiefelBasis,
    y: &Matrix,
    data: &MaskedObservation,
    penalty: &SmoothedPenalty,
) -> Result<Matrix> {
    check_coords(basis, y, data)?;
    let e = penalty.grad_masked(&data.residual(&(basis.matrix() * y)), data.mask())?;
    Ok(-basis.matrix().tr_mul(&e))
}

/// Nonlinear CG over `Y` with the basis held fixed.
pub fn cg_euclidean_y(
    basis: &StiefelBasis,
    data: &MaskedObservation,
    penalty: &SmoothedPenalty,
    y0: &Matrix,
    cfg: &SolverConfig,
) -> Result<CoordinateOutcome> {
    let mut y = y0.clone();
    let mut f = coordinate_cost(basis, &y, data, penalty)?;
    let mut costs = vec![f];
    let mut g = coordinate_grad(basis, &y, data, penalty)?;
    let mut d = -&g;
    let mut steepest = true;
    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;

    let floor = rounding_floor(data, penalty);

    while iterations < cfg.inner_max_iters {
        let gg = inner(&g, &g);
        if gg == 0.0 || f <= floor {
            termination = Termination::Converged;
            break;
        }
        let mut slope = inner(&g, &d);
        if !(slope < 0.0) {
            d = -&g;
            slope = -gg;
            steepest = true;
        }
        let ud = basis.matrix() * &d;
        let uy = basis.matrix() * &y;
        let step =
            armijo(f, slope, &cfg.linesearch, |t| penalty.eval_masked(&data.residual(&(&uy + &ud * t)), data.mask()));
        let step = match step {
            Ok(step) => step,
            Err(Error::Stalled { .. }) if !steepest => {
                d = -&g;
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

        y += &d * step.t;
        let g_next = coordinate_grad(basis, &y, data, penalty)?;
        d = match conjugate_beta(cfg.beta, &g_next, &g, &g, &d) {
            Some(b) => {
                steepest = false;
                &d * b - &g_next
            }
            None => {
                steepest = true;
                -&g_next
            }
        };
        let decrease = (f - step.cost) / f.abs().max(f64::MIN_POSITIVE);
        f = step.cost;
        g = g_next;
        costs.push(f);
        if decrease < cfg.rel_tol {
            termination = Termination::Converged;
            break;
        }
    }

    Ok(CoordinateOutcome { y, costs, iterations, termination })
}
