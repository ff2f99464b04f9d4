//! The blocked reference and the algorithm-by-blocks draw identical sketches,
//! so for equal (seed, b, q) they agree on the spectrum of T and on both
//! factorization invariants.

use randutv::matrix::{frobenius_norm, matmul};
use randutv::metrics::{make_test_matrix, TestMatrix};
use randutv::svd::singular_values;
use randutv::{randutv, randutv_ab, Matrix, Trans, UtvConfig, UtvResult};

fn residual(a: &Matrix, r: &UtvResult) -> f64 {
    let u = r.u.as_ref().unwrap();
    let v = r.v.as_ref().unwrap();
    let ut = matmul(u.view(), Trans::No, r.t.view(), Trans::No).unwrap();
    let utv = matmul(ut.view(), Trans::No, v.view(), Trans::Yes).unwrap();
    frobenius_norm(utv.sub_matrix(a).unwrap().view()) / frobenius_norm(a.view())
}

#[test]
fn both_algorithms_agree() {
    for (m, n, b) in [(64, 64, 16), (96, 64, 16), (64, 96, 16), (48, 48, 8)] {
        for q in 0..=2 {
            let a = make_test_matrix(TestMatrix::Geometric(0.9), m, n, 11).unwrap();
            let cfg = UtvConfig::new(b, q, 5);
            let blk = randutv(&a, &cfg).unwrap();
            let ab = randutv_ab(&a, &cfg, 3).unwrap();
            for r in [&blk, &ab] {
                assert!(residual(&a, r) <= 1e-13, "{m}x{n} b={b} q={q}");
                for i in 0..m {
                    for j in 0..i.min(n) {
                        assert_eq!(r.t[(i, j)], 0.0);
                    }
                }
            }
            let s1 = singular_values(blk.t.view()).unwrap();
            let s2 = singular_values(ab.t.view()).unwrap();
            for (x, y) in s1.iter().zip(&s2) {
                assert!((x - y).abs() <= 1e-12 * s1[0]);
            }
            // Leading diagonal block: same sketch, same subspace.
            for k in 0..b {
                let (x, y) = (blk.t[(k, k)].abs(), ab.t[(k, k)].abs());
                assert!((x - y).abs() <= 1e-8 * s1[0], "{m}x{n} q={q} k={k}: {x} vs {y}");
            }
        }
    }
}
