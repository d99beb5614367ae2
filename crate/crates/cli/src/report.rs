use serde::Serialize;

use rpca::solver::{DecompositionResult, SolverConfig};

/// Relative error at or below which a recovery counts as successful.
pub const SUCCESS_THRESHOLD: f64 = 0.05;

pub fn is_success(rel_error_l: f64) -> bool {
    rel_error_l <= SUCCESS_THRESHOLD
}

#[derive(Debug, Serialize)]
pub struct ConfigEcho {
    pub m: usize,
    pub n: usize,
    pub rank: usize,
    pub penalty: String,
    pub p: f64,
    pub mu_start: f64,
    pub mu_end: f64,
    pub iters: usize,
    pub beta: String,
    pub observed_fraction: f64,
    pub source: String,
}

impl ConfigEcho {
    pub fn new(cfg: &SolverConfig, shape: (usize, usize), observed: usize, source: String) -> Self {
        Self {
            m: shape.0,
            n: shape.1,
            rank: cfg.rank,
            penalty: cfg.penalty.to_string(),
            p: cfg.p,
            mu_start: cfg.mu.mu0(),
            mu_end: cfg.mu.mu_final(),
            iters: cfg.outer_iters(),
            beta: cfg.beta.to_string(),
            observed_fraction: observed as f64 / (shape.0 * shape.1) as f64,
            source,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct PhaseCosts {
    pub mu: f64,
    pub subspace: Vec<f64>,
    pub coordinate: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct RunReport {
    pub config: ConfigEcho,
    pub seed: u64,
    pub rel_error_l: Option<f64>,
    pub rel_error_s: Option<f64>,
    /// `None` without ground truth.
    pub success: Option<bool>,
    pub wall_time_s: f64,
    pub monotone: bool,
    pub cost_trace: Vec<PhaseCosts>,
}

impl RunReport {
    pub fn new(
        config: ConfigEcho,
        seed: u64,
        result: &DecompositionResult,
        rel_error_l: Option<f64>,
        rel_error_s: Option<f64>,
        wall_time_s: f64,
    ) -> Self {
        Self {
            config,
            seed,
            rel_error_l,
            rel_error_s,
            success: rel_error_l.map(is_success),
            wall_time_s,
            monotone: result.is_monotone(),
            cost_trace: result
                .cost_trace
                .iter()
                .map(|p| PhaseCosts {
                    mu: p.mu,
                    subspace: p.subspace_costs.clone(),
                    coordinate: p.coordinate_costs.clone(),
                })
                .collect(),
        }
    }
}
