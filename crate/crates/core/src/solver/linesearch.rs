//! Armijo backtracking.

use crate::error::{param_err, Error, Result};

/// Backtracking parameters: trial steps `t_init·ρ, t_init·ρ², …` are tried
/// until `f(t) ≤ f(0) + c·t·slope`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearchConfig {
    pub t_init: f64,
    pub c: f64,
    pub rho: f64,
    pub max_halvings: usize,
}

/// Steps below this are treated as a stalled search.
pub const MIN_STEP: f64 = 1e-16;

impl Default for LineSearchConfig {
    fn default() -> Self {
        Self { t_init: 1.0, c: 1e-4, rho: 0.5, max_halvings: 40 }
    }
}

impl LineSearchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c < 1.0) {
            return Err(param_err(format!("Armijo constant c must lie in (0, 1), got {}", self.c)));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(param_err(format!("backtracking factor rho must lie in (0, 1), got {}", self.rho)));
        }
        if !(self.t_init > 0.0 && self.t_init.is_finite()) {
            return Err(param_err(format!("initial step must be positive, got {}", self.t_init)));
        }
        if self.max_halvings == 0 {
            return Err(param_err("max_halvings must be at least 1"));
        }
        Ok(())
    }
}

/// Accepted step together with the cost there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub t: f64,
    pub cost: f64,
    /// Number of rejected trial steps before acceptance.
    pub rejections: usize,
}

/// Largest `t ∈ {t_init·ρ^j, j ≥ 1}` with `cost(t) ≤ f0 + c·t·slope`.
///
/// Fails with [`Error::NonDescent`] when `slope ≥ 0` and with
/// [`Error::Stalled`] when `max_halvings` trials are rejected or the step
/// drops below [`MIN_STEP`]. Non-finite trial costs count as rejections.
pub fn armijo<F>(f0: f64, slope: f64, cfg: &LineSearchConfig, mut cost: F) -> Result<Step>
where
    F: FnMut(f64) -> Result<f64>,
{
    if !(slope < 0.0) {
        return Err(Error::NonDescent { slope });
    }
    let mut t = cfg.t_init;
    for rejections in 0..cfg.max_halvings {
        t *= cfg.rho;
        if t < MIN_STEP {
            break;
        }
        let ft = cost(t)?;
        if ft.is_finite() && ft <= f0 + cfg.c * t * slope {
            return Ok(Step { t, cost: ft, rejections });
        }
    }
    Err(Error::Stalled { step: t })
}
