//! One-sided Jacobi SVD for small square blocks, and a QR-first dense SVD
//! built on it for rectangular inputs.

use crate::error::{shape_err, Error, Result};
use crate::householder::{form_compact_wy, hqr};
use crate::matrix::{dot, norm2, MatRef, Matrix};

pub const DEFAULT_TOL: f64 = 1e-15;
pub const MAX_SWEEPS: usize = 30;

/// `A = U diag(s) V^T` with `s` descending and non-negative.
#[derive(Clone, Debug)]
pub struct SvdTriple {
    pub u: Matrix,
    pub s: Vec<f64>,
    pub v: Matrix,
}

impl SvdTriple {
    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.u.clone();
        for (j, &s) in self.s.iter().enumerate() {
            us.col_mut(j).iter_mut().for_each(|x| *x *= s);
        }
        crate::matrix::matmul(
            us.view(),
            crate::matrix::Trans::No,
            self.v.view(),
            crate::matrix::Trans::Yes,
        )
        .expect("conforming factors")
    }
}

fn rotate(a: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    let n = a.rows();
    let (lo, hi) = a.as_mut_slice().split_at_mut(q * n);
    let cp = &mut lo[p * n..(p + 1) * n];
    let cq = &mut hi[..n];
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (xp, xq) = (*x, *y);
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

/// Reorders columns by descending norm (stable), carrying `v` along. Sweeping
/// in this order converges far faster on strongly graded inputs.
fn sort_columns(work: &mut Matrix, v: &mut Matrix) {
    let k = work.cols();
    let norms: Vec<f64> = (0..k).map(|j| dot(work.col(j), work.col(j))).collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]).then(x.cmp(&y)));
    if order.iter().enumerate().all(|(i, &j)| i == j) {
        return;
    }
    for m in [work, v] {
        let old = m.clone();
        for (dst, &src) in order.iter().enumerate() {
            m.col_mut(dst).copy_from_slice(old.col(src));
        }
    }
}

/// Fills the columns listed in `missing` with unit vectors orthogonal to every
/// other column of `u`.
fn complete_basis(u: &mut Matrix, missing: &[usize]) {
    let k = u.rows();
    let mut have: Vec<usize> = (0..u.cols()).filter(|j| !missing.contains(j)).collect();
    for &j in missing {
        let mut best: Option<(f64, Vec<f64>)> = None;
        for e in 0..k {
            let mut v = vec![0.0; k];
            v[e] = 1.0;
            for _ in 0..2 {
                for &h in &have {
                    let c = dot(u.col(h), &v);
                    for (vi, &ui) in v.iter_mut().zip(u.col(h)) {
                        *vi -= c * ui;
                    }
                }
            }
            let nv = norm2(&v);
            if best.as_ref().is_none_or(|(bn, _)| nv > *bn) {
                best = Some((nv, v));
            }
        }
        let (nv, v) = best.expect("k >= 1");
        for (dst, x) in u.col_mut(j).iter_mut().zip(v) {
            *dst = x / nv;
        }
        have.push(j);
    }
}

/// SVD of a square block by one-sided (Hestenes) Jacobi.
///
/// A pair of columns is rotated while `|a_p . a_q| > tol' * |a_p| |a_q|`, with
/// `tol' = max(tol, k * eps)` since the Gram entries cannot be resolved below
/// their own rounding. Each sweep first orders the columns by descending norm.
/// Stops after a sweep without rotations, or fails after [`MAX_SWEEPS`] sweeps.
pub fn svd_block(a: MatRef<'_>, tol: f64) -> Result<SvdTriple> {
    let k = a.rows();
    if a.cols() != k {
        return shape_err(format!("svd_block needs a square block, got {}x{}", k, a.cols()));
    }
    let mut work = a.to_owned();
    let mut v = Matrix::identity(k);
    let thresh = tol.max(k as f64 * f64::EPSILON);

    let mut converged = k < 2;
    let mut residual = 0.0_f64;
    let mut sweeps = 0;
    while !converged {
        if sweeps == MAX_SWEEPS {
            return Err(Error::Convergence { sweeps, residual });
        }
        sweeps += 1;
        converged = true;
        residual = 0.0;
        sort_columns(&mut work, &mut v);
        for p in 0..k - 1 {
            for q in p + 1..k {
                let alpha = dot(work.col(p), work.col(p));
                let beta = dot(work.col(q), work.col(q));
                if alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                let gamma = dot(work.col(p), work.col(q));
                let off = gamma.abs() / (alpha.sqrt() * beta.sqrt());
                residual = residual.max(off);
                if off <= thresh {
                    continue;
                }
                converged = false;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut work, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
    }

    let norms: Vec<f64> = (0..k).map(|j| norm2(work.col(j))).collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]).then(x.cmp(&y)));

    let mut u = Matrix::zeros(k, k);
    let mut vs = Matrix::zeros(k, k);
    let mut s = Vec::with_capacity(k);
    let mut missing = Vec::new();
    for (dst, &src) in order.iter().enumerate() {
        let sigma = norms[src];
        s.push(sigma);
        vs.col_mut(dst).copy_from_slice(v.col(src));
        if sigma == 0.0 {
            missing.push(dst);
        } else {
            for (x, &w) in u.col_mut(dst).iter_mut().zip(work.col(src)) {
                *x = w / sigma;
            }
        }
    }
    if !missing.is_empty() {
        complete_basis(&mut u, &missing);
    }
    Ok(SvdTriple { u, s, v: vs })
}

/// Economic SVD of any `m x n`: QR-first reduction to a `min(m,n)` square
/// factor, then [`svd_block`] on its transpose. `U` is `m x p`, `V` is `n x p`.
pub fn svd_dense(a: MatRef<'_>, tol: f64) -> Result<SvdTriple> {
    let (m, n) = (a.rows(), a.cols());
    if m == 0 || n == 0 {
        return Ok(SvdTriple {
            u: Matrix::zeros(m, 0),
            s: Vec::new(),
            v: Matrix::zeros(n, 0),
        });
    }
    if m < n {
        let t = svd_dense(a.transpose().view(), tol)?;
        return Ok(SvdTriple {
            u: t.v,
            s: t.s,
            v: t.u,
        });
    }
    // Jacobi runs on R^T rather than R: the rows of a triangular factor are
    // much closer to orthogonal than its columns, which keeps the sweep count
    // low on strongly graded spectra. R^T = Ui S Vi^T gives A = (Q Vi) S Ui^T.
    let h = hqr(a.to_owned());
    let rt = h.r().transpose();
    let inner = svd_block(rt.view(), tol)?;
    let mut u = Matrix::zeros(m, n);
    u.sub_mut(0, 0, n, n).copy_from(inner.v.view())?;
    form_compact_wy(&h).apply_q_left(u.view_mut())?;
    Ok(SvdTriple {
        u,
        s: inner.s,
        v: inner.u,
    })
}

/// Singular values only.
pub fn singular_values(a: MatRef<'_>) -> Result<Vec<f64>> {
    Ok(svd_dense(a, DEFAULT_TOL)?.s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{frobenius_norm, generate_normal_random, matmul, Trans};
    use crate::rng::RngState;

    const EPS: f64 = f64::EPSILON;

    fn gaussian(seed: u64, m: usize, n: usize) -> Matrix {
        generate_normal_random(&mut RngState::new(seed), m, n)
    }

    fn orth_defect(q: &Matrix) -> f64 {
        let qtq = matmul(q.view(), Trans::Yes, q.view(), Trans::No).unwrap();
        frobenius_norm(qtq.sub_matrix(&Matrix::identity(q.cols())).unwrap().view())
    }

    /// Cyclic two-sided Jacobi eigenvalues of a symmetric matrix; independent
    /// of the one-sided column-rotation path.
    fn jacobi_eigenvalues(mut a: Matrix) -> Vec<f64> {
        let n = a.rows();
        for _ in 0..100 {
            let off: f64 = (0..n)
                .flat_map(|i| (0..n).map(move |j| (i, j)))
                .filter(|(i, j)| i != j)
                .map(|(i, j)| a[(i, j)].powi(2))
                .sum();
            if off.sqrt() < 1e-15 * frobenius_norm(a.view()) {
                break;
            }
            for p in 0..n - 1 {
                for q in p + 1..n {
                    if a[(p, q)] == 0.0 {
                        continue;
                    }
                    let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let (akp, akq) = (a[(k, p)], a[(k, q)]);
                        a[(k, p)] = c * akp - s * akq;
                        a[(k, q)] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                        a[(p, k)] = c * apk - s * aqk;
                        a[(q, k)] = s * apk + c * aqk;
                    }
                }
            }
        }
        let mut ev = a.diag();
        ev.sort_by(|x, y| y.total_cmp(x));
        ev
    }

    fn check_invariants(a: &Matrix, t: &SvdTriple) {
        let k = t.s.len();
        assert!(t.s.windows(2).all(|w| w[0] >= w[1]));
        assert!(t.s.iter().all(|&s| s >= 0.0));
        let err = frobenius_norm(t.reconstruct().sub_matrix(a).unwrap().view());
        assert!(err <= 100.0 * k.max(1) as f64 * EPS * frobenius_norm(a.view()).max(EPS));
        assert!(orth_defect(&t.u) <= 100.0 * k.max(1) as f64 * EPS);
        assert!(orth_defect(&t.v) <= 100.0 * k.max(1) as f64 * EPS);
    }

    #[test]
    fn diagonal_block() {
        let a = Matrix::from_diag(2, 2, &[2.0, 1.0]);
        let t = svd_block(a.view(), DEFAULT_TOL).unwrap();
        assert_eq!(t.s, vec![2.0, 1.0]);
        for i in 0..2 {
            assert_eq!(t.u[(i, i)].abs(), 1.0);
            assert_eq!(t.v[(i, i)].abs(), 1.0);
        }
        check_invariants(&a, &t);
    }

    #[test]
    fn permutation_block() {
        let a = Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let t = svd_block(a.view(), DEFAULT_TOL).unwrap();
        assert!((t.s[0] - 1.0).abs() < 1e-15 && (t.s[1] - 1.0).abs() < 1e-15);
        check_invariants(&a, &t);
    }

    #[test]
    fn ascending_input_is_sorted() {
        let a = Matrix::from_diag(3, 3, &[0.5, -3.0, 2.0]);
        let t = svd_block(a.view(), DEFAULT_TOL).unwrap();
        assert_eq!(t.s, vec![3.0, 2.0, 0.5]);
        check_invariants(&a, &t);
    }

    #[test]
    fn random_block_against_gram_eigenvalues() {
        let a = gaussian(16, 16, 16);
        let t = svd_block(a.view(), DEFAULT_TOL).unwrap();
        check_invariants(&a, &t);
        let gram = matmul(a.view(), Trans::Yes, a.view(), Trans::No).unwrap();
        let ev = jacobi_eigenvalues(gram);
        for (s, e) in t.s.iter().zip(&ev) {
            assert!((s * s - e).abs() <= 1e-12 * ev[0], "{s} vs {}", e.sqrt());
        }
    }

    #[test]
    fn rank_deficient_block_gets_orthonormal_completion() {
        let mut a = gaussian(3, 6, 6);
        a.col_mut(2).fill(0.0);
        a.col_mut(4).fill(0.0);
        // zero rows too, so a direct column normalization cannot help
        for j in 0..6 {
            a[(5, j)] = 0.0;
        }
        let t = svd_block(a.view(), DEFAULT_TOL).unwrap();
        assert_eq!(t.s[5], 0.0);
        check_invariants(&a, &t);
        let z = svd_block(Matrix::zeros(4, 4).view(), DEFAULT_TOL).unwrap();
        assert!(z.s.iter().all(|&s| s == 0.0));
        check_invariants(&Matrix::zeros(4, 4), &z);
    }

    #[test]
    fn non_square_block_is_rejected() {
        assert!(matches!(
            svd_block(Matrix::zeros(3, 2).view(), DEFAULT_TOL),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn dense_tall_and_wide() {
        let t = svd_dense(Matrix::from_rows(&[[1.0], [0.0], [0.0]]).unwrap().view(), DEFAULT_TOL)
            .unwrap();
        assert_eq!(t.s.len(), 1);
        assert!((t.s[0] - 1.0).abs() < 1e-15);

        for (m, n) in [(40, 25), (25, 40)] {
            let a = gaussian(17, m, n);
            let t = svd_dense(a.view(), DEFAULT_TOL).unwrap();
            assert_eq!(t.u.shape(), (m, m.min(n)));
            assert_eq!(t.v.shape(), (n, m.min(n)));
            let err = frobenius_norm(t.reconstruct().sub_matrix(&a).unwrap().view());
            assert!(err <= 1e-12 * frobenius_norm(a.view()));
            assert!(orth_defect(&t.u) < 1e-12 && orth_defect(&t.v) < 1e-12);
        }

        let z = svd_dense(Matrix::zeros(5, 3).view(), DEFAULT_TOL).unwrap();
        assert!(z.s.iter().all(|&s| s == 0.0));
        assert!(orth_defect(&z.u) < 1e-14 && orth_defect(&z.v) < 1e-14);
    }

    #[test]
    fn orthogonal_invariance() {
        let a = gaussian(21, 30, 20);
        let q = hqr(gaussian(22, 30, 30)).q();
        let qa = q.matmul(&a).unwrap();
        let s1 = singular_values(a.view()).unwrap();
        let s2 = singular_values(qa.view()).unwrap();
        for (x, y) in s1.iter().zip(&s2) {
            assert!((x - y).abs() <= 1e-11 * s1[0]);
        }
    }

    #[test]
    fn eckart_young_truncation() {
        let a = gaussian(23, 30, 18);
        let t = svd_dense(a.view(), DEFAULT_TOL).unwrap();
        for k in [1, 5, 12] {
            let mut trunc = t.clone();
            trunc.s.iter_mut().skip(k).for_each(|s| *s = 0.0);
            let err = frobenius_norm(a.sub_matrix(&trunc.reconstruct()).unwrap().view());
            let tail = t.s[k..].iter().map(|s| s * s).sum::<f64>().sqrt();
            assert!((err - tail).abs() <= 1e-12 * tail.max(1.0));
        }
    }
}
