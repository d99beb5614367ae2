mod common;

use common::*;
use rpca::data::{mask_apply, subsample_mask, MaskedObservation, SeededRng};
use rpca::geometry::{compact_qr, orth_complement, retract, CompactTangent};
use rpca::penalty::{PenaltyKind, SmoothedPenalty};
use rpca::solver::{coordinate_cost, coordinate_grad, riemannian_grad_compact, subspace_cost};
use rpca::Matrix;

const MUS: [f64; 2] = [2.0, 0.1];

fn penalty(kind: PenaltyKind, mu: f64) -> SmoothedPenalty {
    SmoothedPenalty::new(kind, mu, 0.5).unwrap()
}

/// Data near a rank-`k` model with a few large entries, optionally subsampled.
fn instance(m: usize, n: usize, k: usize, fraction: f64, seed: u64) -> (MaskedObservation, Matrix) {
    let mut rng = SeededRng::new(seed);
    let l = random(m, k, &mut rng) * random(k, n, &mut rng);
    let mut x = &l + random(m, n, &mut rng) * 0.3;
    for _ in 0..(m * n / 10) {
        let (i, j) = (rng.below(m as u64) as usize, rng.below(n as u64) as usize);
        x[(i, j)] += rng.uniform_in(-5.0, 5.0);
    }
    let mask = subsample_mask(m, n, fraction, seed + 1000).unwrap();
    (mask_apply(&x, &mask).unwrap(), l)
}

#[test]
fn riemannian_gradient_matches_directional_derivative() {
    let mut rng = SeededRng::new(1);
    for (case, kind) in PenaltyKind::ALL.into_iter().enumerate() {
        for mu in MUS {
            for fraction in [1.0, 0.6] {
                let (m, n, k) = (10, 6, 2);
                let (data, _) = instance(m, n, k, fraction, 40 + case as u64);
                let basis = random_basis(m, k, &mut rng);
                let frame = orth_complement(&basis).unwrap();
                // A target that is not in span(U), so the cost depends on P.
                let target = random(m, n, &mut rng);
                let h = penalty(kind, mu);
                let g = riemannian_grad_compact(&frame, &target, &data, &h).unwrap();
                let a = CompactTangent::new(random(m - k, k, &mut rng));
                let neg = CompactTangent::new(-a.matrix());
                let (qp, qn) = (compact_qr(&a), compact_qr(&neg));
                let f = |t: f64| {
                    let b = if t >= 0.0 { retract(&frame, &qp, t) } else { retract(&frame, &qn, -t) };
                    subspace_cost(&b.unwrap(), &target, &data, &h).unwrap()
                };
                let fd = central_diff(f, 1e-5);
                let analytic = g.metric(&a);
                assert!(rel_diff(fd, analytic) < 1e-4, "{kind} mu={mu} fraction={fraction}: fd {fd} vs {analytic}");
            }
        }
    }
}

#[test]
fn riemannian_gradient_matches_full_matrix_oracle() {
    let mut rng = SeededRng::new(2);
    for (case, kind) in PenaltyKind::ALL.into_iter().enumerate() {
        for mu in MUS {
            let (m, n, k) = (9, 7, 3);
            let (data, _) = instance(m, n, k, 0.7, 60 + case as u64);
            let basis = random_basis(m, k, &mut rng);
            let frame = orth_complement(&basis).unwrap();
            let target = random(m, n, &mut rng);
            let h = penalty(kind, mu);
            let p = basis.projector();
            let e = h.grad_masked(&data.residual(&(&p * &target)), data.mask()).unwrap();
            let euclidean = -(e * target.transpose());
            let oracle = con(&frame.full(), k, &tangent_projection(&p, &euclidean));
            let g = riemannian_grad_compact(&frame, &target, &data, &h).unwrap();
            assert!((g.matrix() - &oracle).norm() < 1e-9 * oracle.norm().max(1.0), "{kind} mu={mu}");
        }
    }
}

#[test]
fn riemannian_gradient_vanishes_at_zero_residual() {
    let mut rng = SeededRng::new(3);
    let basis = random_basis(8, 2, &mut rng);
    let frame = orth_complement(&basis).unwrap();
    let target = basis.matrix() * random(2, 5, &mut rng);
    let data = MaskedObservation::full(target.clone());
    for kind in PenaltyKind::ALL {
        let g = riemannian_grad_compact(&frame, &target, &data, &penalty(kind, 0.5)).unwrap();
        assert!(g.norm() < 1e-12);
    }
}

#[test]
fn euclidean_gradient_matches_central_differences() {
    let mut rng = SeededRng::new(4);
    for (case, kind) in PenaltyKind::ALL.into_iter().enumerate() {
        for mu in MUS {
            for fraction in [1.0, 0.6] {
                let (m, n, k) = (10, 6, 3);
                let (data, _) = instance(m, n, k, fraction, 80 + case as u64);
                let basis = random_basis(m, k, &mut rng);
                let y = random(k, n, &mut rng);
                let h = penalty(kind, mu);
                let g = coordinate_grad(&basis, &y, &data, &h).unwrap();
                let mut fd = Matrix::zeros(k, n);
                for i in 0..k {
                    for j in 0..n {
                        fd[(i, j)] = central_diff(
                            |t| {
                                let mut yt = y.clone();
                                yt[(i, j)] += t;
                                coordinate_cost(&basis, &yt, &data, &h).unwrap()
                            },
                            1e-6,
                        );
                    }
                }
                let err = (&g - &fd).norm() / g.norm();
                assert!(err < 1e-5, "{kind} mu={mu} fraction={fraction}: relative error {err:e}");
            }
        }
    }
}
