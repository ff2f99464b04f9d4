//! Reference blocked randUTV: `T := A`, then panel by panel
//! `T <- U_step^T T V_step` until `T` is upper triangular (trapezoidal when
//! `m < n`), accumulating `U` and `V` on request.
//!
//! Each step with more than `b` columns left:
//! 1. sketch `Y = (T22^T T22)^q T22^T G` with a Gaussian `G`, QR it, and apply
//!    the resulting `Q` from the right to the trailing columns of `T`;
//! 2. QR the leading `b` columns of `T22` and apply `Q^T` from the left;
//! 3. SVD the new `b x b` diagonal block and rotate its block row/column.
//!
//! When at most `b` columns remain the trailing block is finished exactly by a
//! QR (or LQ) reduction followed by a square SVD.

use crate::error::{Error, Result};
use crate::householder::{form_compact_wy, hqr, hqr_in_place, CompactWY, HouseholderFactor};
use crate::matrix::{gemm, generate_normal_random, matmul, MatMut, MatRef, Matrix, Trans};
use crate::rng::RngState;
use crate::svd::{svd_block, DEFAULT_TOL};

#[derive(Clone, Debug, PartialEq)]
pub struct UtvConfig {
    /// Block size, at least 1.
    pub b: usize,
    /// Power iteration count.
    pub q: usize,
    pub build_u: bool,
    pub build_v: bool,
    pub seed: u64,
    /// Reduce tall inputs (`m > n`) to their `n x n` R factor first.
    pub qr_first: bool,
    pub svd_tol: f64,
}

impl Default for UtvConfig {
    fn default() -> Self {
        Self {
            b: 128,
            q: 1,
            build_u: true,
            build_v: true,
            seed: 0,
            qr_first: false,
            svd_tol: DEFAULT_TOL,
        }
    }
}

impl UtvConfig {
    pub fn new(b: usize, q: usize, seed: u64) -> Self {
        Self {
            b,
            q,
            seed,
            ..Self::default()
        }
    }

    pub fn without_uv(mut self) -> Self {
        self.build_u = false;
        self.build_v = false;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.b < 1 {
            return Err(Error::Config("block size b must be at least 1".into()));
        }
        if self.svd_tol.is_nan() || self.svd_tol <= 0.0 {
            return Err(Error::Config("svd tolerance must be positive".into()));
        }
        Ok(())
    }

    /// Sketch stream for factorization step `step`.
    pub fn step_rng(&self, step: usize) -> RngState {
        RngState::new(self.seed).derive(step as u64)
    }
}

#[derive(Clone, Debug)]
pub struct UtvResult {
    /// `m x n`, exactly zero below the diagonal.
    pub t: Matrix,
    pub u: Option<Matrix>,
    pub v: Option<Matrix>,
    pub config: UtvConfig,
}

impl UtvResult {
    /// `U T V^T`, if both factors were built.
    pub fn reconstruct(&self) -> Option<Matrix> {
        let (u, v) = (self.u.as_ref()?, self.v.as_ref()?);
        let ut = u.matmul(&self.t).ok()?;
        matmul(ut.view(), Trans::No, v.view(), Trans::Yes).ok()
    }
}

/// Right-side sketch basis for the trailing matrix.
///
/// Returns the WY form of the QR of `Y = (T22^T T22)^q T22^T G`, `G` being
/// `rows(T22) x b` Gaussian drawn from `rng`. Power steps are plain
/// alternating products without re-orthonormalization.
pub fn build_v_alpha(t22: MatRef<'_>, b: usize, q: usize, rng: &mut RngState) -> Result<CompactWY> {
    let (m, n) = (t22.rows(), t22.cols());
    let g = generate_normal_random(rng, m, b);
    let mut y = matmul(t22, Trans::Yes, g.view(), Trans::No)?;
    let mut z = Matrix::zeros(m, b);
    for _ in 0..q {
        gemm(1.0, Trans::No, t22, Trans::No, y.view(), 0.0, z.view_mut())?;
        gemm(1.0, Trans::Yes, t22, Trans::No, z.view(), 0.0, y.view_mut())?;
    }
    debug_assert_eq!(y.rows(), n);
    Ok(form_compact_wy(&hqr(y)))
}

/// QR of the leading panel, in place. On return the panel holds `R` with
/// exact zeros below the diagonal.
pub fn build_u_alpha(mut panel: MatMut<'_>) -> CompactWY {
    let tau = hqr_in_place(panel.rb_mut());
    let h = HouseholderFactor {
        factored: panel.to_owned(),
        tau,
    };
    panel.zero_strict_lower();
    form_compact_wy(&h)
}

/// Diagonalizes the square block `t11` by its SVD and rotates its neighbours:
/// `right <- U_svd^T right`, `above <- above V_svd`, `u_acc <- u_acc U_svd`,
/// `v_acc <- v_acc V_svd`.
pub fn beta_stage(
    mut t11: MatMut<'_>,
    right: Option<MatMut<'_>>,
    above: Option<MatMut<'_>>,
    u_acc: Option<MatMut<'_>>,
    v_acc: Option<MatMut<'_>>,
    tol: f64,
) -> Result<()> {
    let svd = svd_block(t11.rb(), tol)?;
    t11.fill(0.0);
    for (i, &s) in svd.s.iter().enumerate() {
        t11.set(i, i, s);
    }
    if let Some(mut r) = right {
        let old = r.to_owned();
        gemm(1.0, Trans::Yes, svd.u.view(), Trans::No, old.view(), 0.0, r.rb_mut())?;
    }
    for (target, factor) in [(above, &svd.v), (v_acc, &svd.v), (u_acc, &svd.u)] {
        if let Some(mut x) = target {
            let old = x.to_owned();
            gemm(1.0, Trans::No, old.view(), Trans::No, factor.view(), 0.0, x.rb_mut())?;
        }
    }
    Ok(())
}

struct Work {
    t: Matrix,
    u: Option<Matrix>,
    v: Option<Matrix>,
}

impl Work {
    fn dims(&self) -> (usize, usize) {
        self.t.shape()
    }

    /// One randomized step on `T[rs.., cs..]` with panel width `bw`.
    fn step(&mut self, rs: usize, cs: usize, bw: usize, cfg: &UtvConfig, step: usize) -> Result<()> {
        let (m, n) = self.dims();
        let (r, c) = (m - rs, n - cs);

        let mut rng = cfg.step_rng(step);
        let wy_v = build_v_alpha(self.t.sub(rs, cs, r, c), bw, cfg.q, &mut rng)?;
        wy_v.apply_q_right(self.t.sub_mut(0, cs, m, c))?;
        if let Some(v) = self.v.as_mut() {
            wy_v.apply_q_right(v.sub_mut(0, cs, n, c))?;
        }

        let wy_u = build_u_alpha(self.t.sub_mut(rs, cs, r, bw));
        wy_u.apply_qt_left(self.t.sub_mut(rs, cs + bw, r, c - bw))?;
        if let Some(u) = self.u.as_mut() {
            wy_u.apply_q_right(u.sub_mut(0, rs, m, r))?;
        }

        self.beta(rs, cs, bw, cfg.svd_tol)
    }

    fn beta(&mut self, rs: usize, cs: usize, bw: usize, tol: f64) -> Result<()> {
        let (m, n) = self.dims();
        // Disjoint pieces of T are handled through copies; the diagonal block
        // is the only one the SVD writes.
        let mut t11 = self.t.sub(rs, cs, bw, bw).to_owned();
        let mut right = self.t.sub(rs, cs + bw, bw, n - cs - bw).to_owned();
        let mut above = self.t.sub(0, cs, rs, bw).to_owned();
        beta_stage(
            t11.view_mut(),
            Some(right.view_mut()),
            Some(above.view_mut()),
            self.u.as_mut().map(|u| u.sub_mut(0, rs, m, bw)),
            self.v.as_mut().map(|v| v.sub_mut(0, cs, n, bw)),
            tol,
        )?;
        self.t.sub_mut(rs, cs, bw, bw).copy_from(t11.view())?;
        self.t.sub_mut(rs, cs + bw, bw, n - cs - bw).copy_from(right.view())?;
        self.t.sub_mut(0, cs, rs, bw).copy_from(above.view())?;
        Ok(())
    }

    /// Deterministic finish of the trailing `r x c` block.
    fn finish(&mut self, rs: usize, cs: usize, tol: f64) -> Result<()> {
        let (m, n) = self.dims();
        let (r, c) = (m - rs, n - cs);
        if r >= c {
            let wy = build_u_alpha(self.t.sub_mut(rs, cs, r, c));
            if let Some(u) = self.u.as_mut() {
                wy.apply_q_right(u.sub_mut(0, rs, m, r))?;
            }
            self.beta(rs, cs, c, tol)
        } else {
            // LQ through the QR of the transpose: X Q = [L 0].
            let xt = self.t.sub(rs, cs, r, c).transpose();
            let h = hqr(xt);
            let wy = form_compact_wy(&h);
            wy.apply_q_right(self.t.sub_mut(0, cs, rs, c))?;
            if let Some(v) = self.v.as_mut() {
                wy.apply_q_right(v.sub_mut(0, cs, n, c))?;
            }
            let l = h.r().transpose();
            let mut block = self.t.sub_mut(rs, cs, r, c);
            block.fill(0.0);
            block.sub_mut(0, 0, r, r).copy_from(l.view())?;
            self.beta(rs, cs, r, tol)
        }
    }
}

fn randutv_direct(a: &Matrix, cfg: &UtvConfig) -> Result<UtvResult> {
    let (m, n) = a.shape();
    let mut w = Work {
        t: a.clone(),
        u: cfg.build_u.then(|| Matrix::identity(m)),
        v: cfg.build_v.then(|| Matrix::identity(n)),
    };
    let (mut rs, mut cs, mut step) = (0, 0, 0);
    while rs < m && cs < n {
        let (r, c) = (m - rs, n - cs);
        if c <= cfg.b {
            w.finish(rs, cs, cfg.svd_tol)?;
            break;
        }
        let bw = cfg.b.min(r);
        w.step(rs, cs, bw, cfg, step)?;
        rs += bw;
        cs += bw;
        step += 1;
    }
    w.t.zero_strict_lower();
    Ok(UtvResult {
        t: w.t,
        u: w.u,
        v: w.v,
        config: cfg.clone(),
    })
}

/// Blocked randUTV of `a`: `A = U T V^T`.
pub fn randutv(a: &Matrix, cfg: &UtvConfig) -> Result<UtvResult> {
    with_qr_prepass(a, cfg, randutv_direct)
}

/// Validates the input and, when `cfg.qr_first` is set and `m > n`, runs
/// `inner` on the `n x n` R factor of `a`, folding the QR's `Q` into `U`.
pub(crate) fn with_qr_prepass(
    a: &Matrix,
    cfg: &UtvConfig,
    inner: impl FnOnce(&Matrix, &UtvConfig) -> Result<UtvResult>,
) -> Result<UtvResult> {
    cfg.validate()?;
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return Err(Error::Config(format!("cannot factor an empty {m}x{n} matrix")));
    }
    if !(cfg.qr_first && m > n) {
        return inner(a, cfg);
    }

    let h = hqr(a.clone());
    let res = inner(&h.r(), &UtvConfig { qr_first: false, ..cfg.clone() })?;
    let mut t = Matrix::zeros(m, n);
    t.sub_mut(0, 0, n, n).copy_from(res.t.view())?;
    let u = match res.u {
        Some(ui) => {
            let mut u = Matrix::identity(m);
            u.sub_mut(0, 0, n, n).copy_from(ui.view())?;
            form_compact_wy(&h).apply_q_left(u.view_mut())?;
            Some(u)
        }
        None => None,
    };
    Ok(UtvResult {
        t,
        u,
        v: res.v,
        config: cfg.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::frobenius_norm;
    use crate::svd::singular_values;

    const EPS: f64 = f64::EPSILON;

    fn gaussian(seed: u64, m: usize, n: usize) -> Matrix {
        generate_normal_random(&mut RngState::new(seed), m, n)
    }

    fn orth_defect(q: &Matrix) -> f64 {
        let qtq = matmul(q.view(), Trans::Yes, q.view(), Trans::No).unwrap();
        frobenius_norm(qtq.sub_matrix(&Matrix::identity(q.cols())).unwrap().view())
    }

    fn check_valid(a: &Matrix, res: &UtvResult) {
        let (m, n) = a.shape();
        let tol = 100.0 * m.max(n) as f64 * EPS;
        let err = frobenius_norm(res.reconstruct().unwrap().sub_matrix(a).unwrap().view());
        assert!(err <= tol * frobenius_norm(a.view()), "residual {err}");
        assert!(orth_defect(res.u.as_ref().unwrap()) <= tol);
        assert!(orth_defect(res.v.as_ref().unwrap()) <= tol);
        for j in 0..n {
            for i in j + 1..m {
                assert_eq!(res.t[(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn identity_input() {
        let a = Matrix::identity(8);
        let res = randutv(&a, &UtvConfig::new(4, 1, 3)).unwrap();
        check_valid(&a, &res);
        for i in 0..8 {
            assert!((res.t[(i, i)].abs() - 1.0).abs() < 1e-14);
            for j in 0..8 {
                if i != j {
                    assert!(res.t[(i, j)].abs() <= 1e-14);
                }
            }
        }
    }

    #[test]
    fn diagonal_input_recovers_entries() {
        let a = Matrix::from_diag(4, 4, &[4.0, 3.0, 2.0, 1.0]);
        let res = randutv(&a, &UtvConfig::new(2, 2, 9)).unwrap();
        check_valid(&a, &res);
        // Exact up to rounding: the singular values of T.
        let st = singular_values(res.t.view()).unwrap();
        for (x, y) in st.iter().zip([4.0, 3.0, 2.0, 1.0]) {
            assert!((x - y).abs() < 1e-10, "{st:?}");
        }
        // Approximate: the diagonal itself, limited by the sketch quality.
        let mut d: Vec<f64> = res.t.diag().iter().map(|x| x.abs()).collect();
        d.sort_by(|x, y| y.total_cmp(x));
        for (x, y) in d.iter().zip([4.0, 3.0, 2.0, 1.0]) {
            assert!((x - y).abs() < 0.05 * y, "{d:?}");
        }
    }

    #[test]
    fn spectrum_is_preserved() {
        let a = gaussian(5, 64, 48);
        let res = randutv(&a, &UtvConfig::new(16, 1, 1)).unwrap();
        check_valid(&a, &res);
        let sa = singular_values(a.view()).unwrap();
        let st = singular_values(res.t.view()).unwrap();
        for (x, y) in sa.iter().zip(&st) {
            assert!((x - y).abs() <= 1e-11 * sa[0]);
        }
    }

    #[test]
    fn shapes_with_ragged_and_trapezoidal_tails() {
        for (m, n, b) in [(20, 13, 4), (13, 20, 4), (9, 9, 9), (10, 3, 2), (3, 10, 2), (7, 50, 3), (5, 5, 1)] {
            let a = gaussian((m * 100 + n) as u64, m, n);
            for q in 0..3 {
                let res = randutv(&a, &UtvConfig::new(b, q, 2)).unwrap();
                check_valid(&a, &res);
            }
        }
    }

    #[test]
    fn diagonal_blocks_are_diagonal() {
        let (m, n, b) = (40, 32, 8);
        let a = gaussian(12, m, n);
        let res = randutv(&a, &UtvConfig::new(b, 1, 4)).unwrap();
        for blk in 0..n / b {
            for i in 0..b {
                for j in 0..b {
                    if i != j {
                        assert_eq!(res.t[(blk * b + i, blk * b + j)], 0.0);
                    }
                }
                assert!(res.t[(blk * b + i, blk * b + i)] >= 0.0);
            }
        }
    }

    #[test]
    fn deterministic() {
        let a = gaussian(13, 30, 30);
        let cfg = UtvConfig::new(7, 2, 77);
        let r1 = randutv(&a, &cfg).unwrap();
        let r2 = randutv(&a, &cfg).unwrap();
        assert_eq!(r1.t.as_slice(), r2.t.as_slice());
        assert_eq!(r1.u, r2.u);
        assert_eq!(r1.v, r2.v);
    }

    #[test]
    fn without_factors() {
        let a = gaussian(14, 20, 20);
        let res = randutv(&a, &UtvConfig::new(5, 1, 0).without_uv()).unwrap();
        assert!(res.u.is_none() && res.v.is_none() && res.reconstruct().is_none());
        let full = randutv(&a, &UtvConfig::new(5, 1, 0)).unwrap();
        assert_eq!(res.t, full.t);
    }

    #[test]
    fn qr_first_prepass() {
        let a = gaussian(15, 60, 12);
        let cfg = UtvConfig {
            qr_first: true,
            ..UtvConfig::new(4, 1, 5)
        };
        let res = randutv(&a, &cfg).unwrap();
        check_valid(&a, &res);
    }

    #[test]
    fn bad_block_size() {
        let err = randutv(&Matrix::identity(3), &UtvConfig::new(0, 1, 0));
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn v_alpha_of_zero_is_identity() {
        let z = Matrix::zeros(6, 6);
        let wy = build_v_alpha(z.view(), 2, 1, &mut RngState::new(1)).unwrap();
        assert!(wy.t.as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn v_alpha_q0_is_single_sketch() {
        let t22 = gaussian(1, 8, 6);
        let mut rng = RngState::new(3);
        let wy = build_v_alpha(t22.view(), 2, 0, &mut rng).unwrap();
        let g = generate_normal_random(&mut RngState::new(3), 8, 2);
        let y = matmul(t22.view(), Trans::Yes, g.view(), Trans::No).unwrap();
        let want = form_compact_wy(&hqr(y));
        assert_eq!(wy.w, want.w);
        assert_eq!(wy.t, want.t);
    }

    /// Largest principal angle between the column spans of two orthonormal
    /// matrices, from the smallest singular value of `A^T B`.
    fn max_principal_angle(a: &Matrix, b: &Matrix) -> f64 {
        let c = matmul(a.view(), Trans::Yes, b.view(), Trans::No).unwrap();
        let s = singular_values(c.view()).unwrap();
        s.last().unwrap().min(1.0).acos()
    }

    #[test]
    fn v_alpha_captures_dominant_subspace() {
        let t22 = Matrix::from_diag(4, 4, &[10.0, 1.0, 0.1, 0.01]);
        let e12 = Matrix::eye(4, 2);
        let mut angles: Vec<f64> = (0..20)
            .map(|seed| {
                let wy = build_v_alpha(t22.view(), 2, 2, &mut RngState::new(seed)).unwrap();
                let mut q = Matrix::eye(4, 2);
                wy.apply_q_left(q.view_mut()).unwrap();
                max_principal_angle(&q, &e12)
            })
            .collect();
        angles.sort_by(f64::total_cmp);
        let median = 0.5 * (angles[9] + angles[10]);
        assert!(median < 0.05, "median angle {median}");
    }

    #[test]
    fn u_alpha_panels() {
        let mut id = Matrix::eye(5, 2);
        let wy = build_u_alpha(id.view_mut());
        assert_eq!(id, Matrix::eye(5, 2));
        assert!(wy.t.as_slice().iter().all(|&x| x == 0.0));

        let mut z = Matrix::zeros(5, 2);
        build_u_alpha(z.view_mut());
        assert_eq!(z, Matrix::zeros(5, 2));

        let p = gaussian(3, 7, 3);
        let mut panel = p.clone();
        let wy = build_u_alpha(panel.view_mut());
        let oracle = hqr(p.clone());
        for i in 0..3 {
            for j in 0..3 {
                assert!((panel[(i, j)] - oracle.r()[(i, j)]).abs() < 1e-14);
            }
        }
        let mut back = panel.clone();
        wy.apply_q_left(back.view_mut()).unwrap();
        assert!(back.sub_matrix(&p).unwrap().max_abs() < 1e-13);
    }

    #[test]
    fn beta_stage_cases() {
        let mut d = Matrix::from_diag(3, 3, &[3.0, 2.0, 1.0]);
        beta_stage(d.view_mut(), None, None, None, None, DEFAULT_TOL).unwrap();
        assert_eq!(d, Matrix::from_diag(3, 3, &[3.0, 2.0, 1.0]));

        let mut one = Matrix::from_rows(&[[-2.5]]).unwrap();
        let mut right = Matrix::from_rows(&[[1.0, 4.0]]).unwrap();
        beta_stage(one.view_mut(), Some(right.view_mut()), None, None, None, DEFAULT_TOL).unwrap();
        assert_eq!(one[(0, 0)], 2.5);
        assert_eq!(right, Matrix::from_rows(&[[-1.0, -4.0]]).unwrap());

        let mut t11 = gaussian(4, 8, 8);
        let mut row = gaussian(5, 8, 12);
        let before = singular_values(row.view()).unwrap();
        beta_stage(t11.view_mut(), Some(row.view_mut()), None, None, None, DEFAULT_TOL).unwrap();
        let after = singular_values(row.view()).unwrap();
        for (x, y) in before.iter().zip(&after) {
            assert!((x - y).abs() <= 1e-12 * before[0]);
        }
        for i in 0..8 {
            for j in 0..8 {
                if i != j {
                    assert_eq!(t11[(i, j)], 0.0);
                }
            }
        }
    }
}
