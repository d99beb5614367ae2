//! Robust PCA and streaming subspace tracking on the Grassmannian.
//!
//! A partially observed matrix `X̂ = 𝓐(L + S)` with `rank(L) ≤ k` and sparse
//! `S` is decomposed by alternating two smooth problems under a smoothed ℓ0
//! surrogate `h_μ`:
//!
//! 1. the subspace step, `min over P ∈ Gr(k, m)` of `h_μ(X̂ − 𝓐(P L))`,
//!    solved by conjugate gradients on the Grassmannian ([`solver::cg_grassmann`]);
//! 2. the coordinate step, `min over Y` of `h_μ(X̂ − 𝓐(U Y))`, solved by
//!    Euclidean conjugate gradients ([`solver::cg_euclidean_y`]);
//!
//! while μ shrinks geometrically ([`penalty::MuSchedule`]). The
//! [`tracking`] module turns the same machinery into a per-sample update
//! with a forgetting factor.

pub mod data;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod penalty;
pub mod solver;
pub mod tracking;

pub use error::{Error, Result};
pub use linalg::{Matrix, Vector};
