//! Smoothed ℓ0 surrogates.
//!
//! Each penalty is a sum of a scalar function over all entries, so it is
//! separable across entries and columns:
//!
//! | kind        | value                  | derivative                        |
//! |-------------|------------------------|-----------------------------------|
//! | `LpNorm`    | `(x² + μ)^{p/2}`       | `p·x·(x² + μ)^{p/2 − 1}`          |
//! | `Logarithm` | `log(1 + x²/μ)`        | `2x / (μ + x²)`                   |
//! | `Atan`      | `atan²(x/μ)`           | `2·atan(x/μ)·μ / (μ² + x²)`       |
//!
//! Shrinking μ moves all three toward a count of nonzero entries.

use std::fmt;
use std::str::FromStr;

use crate::data::Mask;
use crate::error::{param_err, Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PenaltyKind {
    LpNorm,
    Logarithm,
    Atan,
}

impl PenaltyKind {
    pub const ALL: [PenaltyKind; 3] = [PenaltyKind::LpNorm, PenaltyKind::Logarithm, PenaltyKind::Atan];

    pub fn name(self) -> &'static str {
        match self {
            PenaltyKind::LpNorm => "lpnorm",
            PenaltyKind::Logarithm => "log",
            PenaltyKind::Atan => "atan",
        }
    }
}

impl fmt::Display for PenaltyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PenaltyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lpnorm" | "lp" => Ok(PenaltyKind::LpNorm),
            "log" | "logarithm" => Ok(PenaltyKind::Logarithm),
            "atan" => Ok(PenaltyKind::Atan),
            other => Err(param_err(format!("unknown penalty `{other}` (expected lpnorm, log or atan)"))),
        }
    }
}

/// A smoothed sparsity measure `h_μ` with its smoothing level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothedPenalty {
    kind: PenaltyKind,
    mu: f64,
    p: f64,
}

impl SmoothedPenalty {
    /// Builds a penalty. `p` is only read for `LpNorm` and must lie in (0, 1)
    /// there. `mu` must be finite and nonnegative; μ = 0 is only usable for
    /// evaluating `LpNorm`.
    pub fn new(kind: PenaltyKind, mu: f64, p: f64) -> Result<Self> {
        if !mu.is_finite() || mu < 0.0 {
            return Err(Error::Domain(format!("smoothing parameter must be finite and >= 0, got {mu}")));
        }
        if kind == PenaltyKind::LpNorm && !(p > 0.0 && p < 1.0) {
            return Err(param_err(format!("lpnorm exponent must lie in (0, 1), got {p}")));
        }
        Ok(Self { kind, mu, p })
    }

    pub fn lpnorm(mu: f64, p: f64) -> Result<Self> {
        Self::new(PenaltyKind::LpNorm, mu, p)
    }

    pub fn logarithm(mu: f64) -> Result<Self> {
        Self::new(PenaltyKind::Logarithm, mu, 0.5)
    }

    pub fn atan(mu: f64) -> Result<Self> {
        Self::new(PenaltyKind::Atan, mu, 0.5)
    }

    pub fn kind(&self) -> PenaltyKind {
        self.kind
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// Same penalty at a different smoothing level.
    pub fn with_mu(&self, mu: f64) -> Result<Self> {
        Self::new(self.kind, mu, self.p)
    }

    fn check_value_domain(&self) -> Result<()> {
        if self.kind != PenaltyKind::LpNorm && self.mu <= 0.0 {
            return Err(Error::Domain(format!("{} penalty requires mu > 0", self.kind)));
        }
        Ok(())
    }

    fn check_grad_domain(&self) -> Result<()> {
        if self.mu <= 0.0 {
            return Err(Error::Domain("gradient requires mu > 0".into()));
        }
        Ok(())
    }

    /// Scalar surrogate for one entry.
    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        let mu = self.mu;
        match self.kind {
            PenaltyKind::LpNorm => (x * x + mu).powf(0.5 * self.p),
            PenaltyKind::Logarithm => (x * x / mu).ln_1p(),
            PenaltyKind::Atan => {
                let a = (x / mu).atan();
                a * a
            }
        }
    }

    /// Scalar derivative for one entry.
    #[inline]
    pub fn derivative(&self, x: f64) -> f64 {
        let mu = self.mu;
        match self.kind {
            PenaltyKind::LpNorm => self.p * x * (x * x + mu).powf(0.5 * self.p - 1.0),
            PenaltyKind::Logarithm => 2.0 * x / (mu + x * x),
            // chain rule factored as 2a·μ/(μ² + x²) so large |x/μ| cannot overflow
            PenaltyKind::Atan => 2.0 * (x / mu).atan() * mu / (mu * mu + x * x),
        }
    }

    /// `h_μ(r)` summed over every entry.
    pub fn eval(&self, r: &Matrix) -> Result<f64> {
        self.check_value_domain()?;
        check_finite(r.iter())?;
        Ok(r.iter().map(|&x| self.value(x)).sum())
    }

    /// Entrywise gradient `∇h_μ(r)`.
    pub fn grad(&self, r: &Matrix) -> Result<Matrix> {
        self.check_grad_domain()?;
        check_finite(r.iter())?;
        Ok(r.map(|x| self.derivative(x)))
    }

    /// `h_μ` summed over the observed entries of `r` only.
    ///
    /// For `LpNorm` this differs from [`eval`](Self::eval) on a zero-filled
    /// residual by the constant `μ^{p/2}` per unobserved entry.
    pub fn eval_masked(&self, r: &Matrix, mask: &Mask) -> Result<f64> {
        self.check_value_domain()?;
        if r.shape() != mask.shape() {
            return Err(Error::Dimension(format!("residual {:?} does not match mask {:?}", r.shape(), mask.shape())));
        }
        if mask.is_full() {
            return self.eval(r);
        }
        let mut acc = 0.0;
        for &(i, j) in mask.indices() {
            let x = r[(i, j)];
            if !x.is_finite() {
                return Err(Error::Domain(format!("non-finite residual at ({i}, {j})")));
            }
            acc += self.value(x);
        }
        Ok(acc)
    }

    /// `𝓐*(∇h_μ(r))`: the gradient on observed entries, zero elsewhere.
    pub fn grad_masked(&self, r: &Matrix, mask: &Mask) -> Result<Matrix> {
        self.check_grad_domain()?;
        if r.shape() != mask.shape() {
            return Err(Error::Dimension(format!("residual {:?} does not match mask {:?}", r.shape(), mask.shape())));
        }
        if mask.is_full() {
            return self.grad(r);
        }
        let mut g = Matrix::zeros(r.nrows(), r.ncols());
        for &(i, j) in mask.indices() {
            let x = r[(i, j)];
            if !x.is_finite() {
                return Err(Error::Domain(format!("non-finite residual at ({i}, {j})")));
            }
            g[(i, j)] = self.derivative(x);
        }
        Ok(g)
    }
}

fn check_finite<'a>(values: impl Iterator<Item = &'a f64>) -> Result<()> {
    for (idx, x) in values.enumerate() {
        if !x.is_finite() {
            return Err(Error::Domain(format!("non-finite entry at linear index {idx}")));
        }
    }
    Ok(())
}

/// Geometric shrinking of μ over a fixed number of outer iterations:
/// `μ_i = μ₀·c^i` with `c = (μ_I/μ₀)^{1/(I−1)}`, so the last of `I` values is
/// `μ_I`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MuSchedule {
    mu0: f64,
    mu_final: f64,
    steps: usize,
    factor: f64,
}

impl MuSchedule {
    pub fn new(mu0: f64, mu_final: f64, steps: usize) -> Result<Self> {
        if !(mu0.is_finite() && mu_final.is_finite()) || mu_final <= 0.0 {
            return Err(param_err(format!("mu schedule needs finite positive bounds, got {mu0} -> {mu_final}")));
        }
        if mu_final >= mu0 {
            return Err(param_err(format!("mu schedule must shrink: {mu0} -> {mu_final}")));
        }
        if steps < 2 {
            return Err(param_err(format!("mu schedule needs at least 2 steps, got {steps}")));
        }
        let factor = (mu_final / mu0).powf(1.0 / (steps - 1) as f64);
        Ok(Self { mu0, mu_final, steps, factor })
    }

    /// A degenerate schedule holding μ fixed for `steps` iterations.
    pub fn constant(mu: f64, steps: usize) -> Result<Self> {
        if !(mu.is_finite() && mu > 0.0) || steps == 0 {
            return Err(param_err(format!("constant schedule needs mu > 0 and steps >= 1, got {mu}, {steps}")));
        }
        Ok(Self { mu0: mu, mu_final: mu, steps, factor: 1.0 })
    }

    pub fn mu0(&self) -> f64 {
        self.mu0
    }

    pub fn mu_final(&self) -> f64 {
        self.mu_final
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Shrink factor `c_μ` applied after each outer iteration.
    pub fn factor(&self) -> f64 {
        self.factor
    }

    /// `μ₀·c^i`.
    pub fn value(&self, i: usize) -> f64 {
        self.mu0 * self.factor.powi(i as i32)
    }

    /// The `steps` values produced by repeated multiplication, as the outer
    /// loop applies them.
    pub fn values(&self) -> Vec<f64> {
        let mut mu = self.mu0;
        (0..self.steps)
            .map(|_| {
                let cur = mu;
                mu *= self.factor;
                cur
            })
            .collect()
    }
}
