//! Cross-module checks against independent oracles.

use proptest::prelude::*;
use randutv::block_cyclic::{distribution_report, element_owner, owner, GridSpec};
use randutv::householder::{comp_td_qr, form_compact_wy, hqr};
use randutv::matrix::{frobenius_norm, generate_normal_random, matmul, spectral_norm_estimate};
use randutv::metrics::{make_test_matrix, TestMatrix};
use randutv::svd::{singular_values, svd_dense, DEFAULT_TOL};
use randutv::{Matrix, RngState, Trans};

fn gaussian(seed: u64, m: usize, n: usize) -> Matrix {
    generate_normal_random(&mut RngState::new(seed), m, n)
}

fn orth_defect(q: &Matrix) -> f64 {
    let g = matmul(q.view(), Trans::Yes, q.view(), Trans::No).unwrap();
    frobenius_norm(g.sub_matrix(&Matrix::identity(q.cols())).unwrap().view())
}

#[test]
fn spectral_estimate_against_jacobi() {
    // The estimator stops on a small relative change, so its distance from
    // sigma_1 is governed by the gap: with r = (s2/s1)^2 the remaining error
    // is about tol * r / (1 - r).
    let tol = 1e-10;
    for seed in 0..5 {
        let a = gaussian(100 + seed, 50, 50);
        let s = singular_values(a.view()).unwrap();
        let r = (s[1] / s[0]).powi(2);
        let est = spectral_norm_estimate(a.view(), tol, 100_000);
        let bound = 2.0 * tol * (1.0 + r / (1.0 - r));
        let rel = (est - s[0]).abs() / s[0];
        assert!(rel <= bound, "seed {seed}: rel {rel:e} > {bound:e}");
        assert!(est <= s[0] * (1.0 + 1e-14), "estimate should not exceed sigma_1");
        // Tightening the tolerance brings the estimate to machine precision.
        let tight = spectral_norm_estimate(a.view(), 1e-15, 100_000);
        assert!((tight - s[0]).abs() / s[0] <= 1e-12, "seed {seed}: {tight} vs {}", s[0]);
    }
}

#[test]
fn hqr_reconstruction_up_to_512() {
    let eps = f64::EPSILON;
    for (m, n) in [(512, 512), (300, 120), (64, 200)] {
        let a = gaussian(m as u64 + n as u64, m, n);
        let h = hqr(a.clone());
        let q = h.q();
        let qr = matmul(q.sub(0, 0, m, m.min(n)), Trans::No, h.r().view(), Trans::No).unwrap();
        let err = frobenius_norm(qr.sub_matrix(&a).unwrap().view());
        assert!(err <= 100.0 * m.max(n) as f64 * eps * frobenius_norm(a.view()), "{m}x{n}: {err:e}");
        assert!(orth_defect(&q) <= 100.0 * m as f64 * eps);
        let r = h.r();
        assert!((0..m.min(n)).all(|i| r[(i, i)] >= 0.0));
    }
}

#[test]
fn wy_orthogonality_bound() {
    let eps = f64::EPSILON;
    for b in [1, 4, 16, 48] {
        let h = hqr(gaussian(b as u64, 3 * b, b));
        let wy = form_compact_wy(&h);
        let mut q = Matrix::identity(3 * b);
        wy.apply_q_left(q.view_mut()).unwrap();
        assert!(orth_defect(&q) <= 100.0 * b as f64 * eps, "b={b}");
    }
}

#[test]
fn td_qr_matches_stacked_hqr_100_instances() {
    let sizes = [2, 4, 8, 16];
    for inst in 0..100u64 {
        let b = sizes[(inst % 4) as usize];
        let mut top = gaussian(1000 + inst, b, b);
        top.zero_strict_lower();
        let mut bot = gaussian(2000 + inst, b, b);
        let mut stacked = Matrix::zeros(2 * b, b);
        stacked.sub_mut(0, 0, b, b).copy_from(top.view()).unwrap();
        stacked.sub_mut(b, 0, b, b).copy_from(bot.view()).unwrap();
        let oracle = hqr(stacked).r();
        comp_td_qr(&mut top, &mut bot).unwrap();
        let scale = frobenius_norm(oracle.view());
        for i in 0..b {
            for j in i..b {
                let d = (top[(i, j)].abs() - oracle[(i, j)].abs()).abs();
                assert!(d <= 1e-12 * scale, "instance {inst} b={b} ({i},{j}): {d:e}");
            }
        }
    }
}

#[test]
fn dense_svd_on_graded_spectrum() {
    // Singular values spanning twenty orders of magnitude, well below the
    // rounding floor at the tail.
    let a = make_test_matrix(TestMatrix::Geometric(0.8), 200, 200, 2024).unwrap();
    let t = svd_dense(a.view(), DEFAULT_TOL).unwrap();
    let rec = t.reconstruct();
    let eps = f64::EPSILON;
    assert!(frobenius_norm(rec.sub_matrix(&a).unwrap().view()) <= 100.0 * 200.0 * eps * frobenius_norm(a.view()));
    for (i, s) in t.s.iter().enumerate().take(120) {
        assert!((s - 0.8f64.powi(i as i32)).abs() <= 1e-13, "{i}");
    }
    assert!(orth_defect(&t.u) <= 100.0 * 200.0 * eps && orth_defect(&t.v) <= 100.0 * 200.0 * eps);
}

#[test]
fn ownership_partitions_small_matrices() {
    for (mb, nb, p, q) in [(1, 1, 2, 2), (3, 2, 2, 3), (4, 4, 2, 3), (5, 7, 3, 1)] {
        let s = GridSpec::new(mb, nb, p, q).unwrap();
        for m in (1..=64).step_by(7) {
            for n in (1..=64).step_by(9) {
                let counts = distribution_report(&s, m, n);
                assert_eq!(counts.iter().sum::<usize>(), m * n);
                let mut brute = vec![0; s.processes()];
                for i in 0..m {
                    for j in 0..n {
                        brute[element_owner(&s, i, j)] += 1;
                    }
                }
                assert_eq!(counts, brute);
            }
        }
    }
}

proptest! {
    #[test]
    fn owner_is_periodic(mb in 1usize..6, nb in 1usize..6, p in 1usize..5, q in 1usize..5, i in 0usize..50, j in 0usize..50) {
        let s = GridSpec::new(mb, nb, p, q).unwrap();
        prop_assert_eq!(owner(&s, i + p, j), owner(&s, i, j));
        prop_assert_eq!(owner(&s, i, j + q), owner(&s, i, j));
        prop_assert!(owner(&s, i, j) < p * q);
    }

    #[test]
    fn gemm_is_bit_reproducible(seed in 0u64..1000, m in 1usize..9, k in 1usize..9, n in 1usize..9) {
        let a = gaussian(seed, m, k);
        let b = gaussian(seed + 1, k, n);
        let c1 = matmul(a.view(), Trans::No, b.view(), Trans::No).unwrap();
        let c2 = matmul(a.view(), Trans::No, b.view(), Trans::No).unwrap();
        prop_assert_eq!(c1, c2);
    }
}
