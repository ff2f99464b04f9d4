//! Unpivoted Householder QR, compact WY products of reflectors, and the
//! triangular-on-top-of-dense updating kernels used by the tiled QR.
//!
//! Conventions:
//! * reflector `H_i = I - tau_i v_i v_i^T` with `v_i(i) = 1` implicit;
//! * `R` always has a non-negative diagonal;
//! * `tau = 0` is the identity reflector;
//! * a [`CompactWY`] holds `W` and the upper triangular `Twy` with
//!   `Q = H_1 H_2 ... H_p = I - W Twy W^T`, so `Q^T B = B - W Twy^T W^T B`.

use crate::error::{shape_err, Result};
use crate::matrix::{dot, gemm, MatMut, MatRef, Matrix, Trans};

/// Output of [`hqr`]: `R` in the upper triangle of `factored`, Householder
/// vectors (unit diagonal implicit) strictly below it.
#[derive(Clone, Debug)]
pub struct HouseholderFactor {
    pub factored: Matrix,
    pub tau: Vec<f64>,
}

impl HouseholderFactor {
    /// The `min(m,n) x n` upper triangular/trapezoidal factor.
    pub fn r(&self) -> Matrix {
        let (m, n) = self.factored.shape();
        let p = m.min(n);
        Matrix::from_fn(p, n, |i, j| if i <= j { self.factored[(i, j)] } else { 0.0 })
    }

    /// Explicit `m x m` orthogonal factor.
    pub fn q(&self) -> Matrix {
        let m = self.factored.rows();
        let mut q = Matrix::identity(m);
        form_compact_wy(self).apply_q_left(q.view_mut()).expect("conforming identity");
        q
    }
}

/// Generates the reflector that maps `x` to `(mu, 0, ..., 0)` with `mu >= 0`.
///
/// On return `x[0] = mu` and `x[1..]` holds the tail of `v`. Returns `tau`.
fn make_reflector(x: &mut [f64]) -> f64 {
    let (head, tail) = x.split_first_mut().expect("non-empty column");
    let alpha = *head;
    let tail_norm = crate::matrix::norm2(tail);
    if tail_norm == 0.0 {
        if alpha >= 0.0 {
            return 0.0;
        }
        // Pure sign flip: H = I - 2 e1 e1^T.
        *head = -alpha;
        return 2.0;
    }
    let mu = alpha.hypot(tail_norm);
    // v1 = alpha - mu without cancellation when alpha > 0.
    let v1 = if alpha <= 0.0 {
        alpha - mu
    } else {
        -(tail_norm / (alpha + mu)) * tail_norm
    };
    let tau = 2.0 * v1 * v1 / (tail_norm * tail_norm + v1 * v1);
    tail.iter_mut().for_each(|t| *t /= v1);
    *head = mu;
    tau
}

/// In-place Householder QR of a view; returns `tau` (length `min(m, n)`).
pub fn hqr_in_place(mut a: MatMut<'_>) -> Vec<f64> {
    let (m, n) = (a.rows(), a.cols());
    let p = m.min(n);
    let mut tau = Vec::with_capacity(p);
    for k in 0..p {
        let t = make_reflector(&mut a.col_mut(k)[k..]);
        tau.push(t);
        if t == 0.0 {
            continue;
        }
        let v: Vec<f64> = a.col_mut(k)[k + 1..].to_vec();
        for j in k + 1..n {
            let col = &mut a.col_mut(j)[k..];
            let w = col[0] + dot(&col[1..], &v);
            let tw = t * w;
            col[0] -= tw;
            for (c, &vi) in col[1..].iter_mut().zip(&v) {
                *c -= tw * vi;
            }
        }
    }
    tau
}

/// Householder QR of `a` (consumed).
pub fn hqr(mut a: Matrix) -> HouseholderFactor {
    let tau = hqr_in_place(a.view_mut());
    HouseholderFactor { factored: a, tau }
}

/// Product of reflectors in compact WY form.
#[derive(Clone, Debug)]
pub struct CompactWY {
    /// `m x p`, unit lower trapezoidal with explicit ones and zeros.
    pub w: Matrix,
    /// `p x p` upper triangular.
    pub t: Matrix,
}

/// Unit lower trapezoidal `W` read out of a factored panel.
pub fn unit_lower(factored: MatRef<'_>) -> Matrix {
    let p = factored.rows().min(factored.cols());
    Matrix::from_fn(factored.rows(), p, |i, j| {
        if i == j {
            1.0
        } else if i > j {
            factored.get(i, j)
        } else {
            0.0
        }
    })
}

/// Forward triangular factor: column `k` is `-tau_k * T[..k, ..k] * (G[..k, k])`
/// where `G = W^T W` restricted above the diagonal, with `Tkk = tau_k`.
fn triangular_factor(gram_col: impl Fn(usize, usize) -> f64, tau: &[f64]) -> Matrix {
    let p = tau.len();
    let mut t = Matrix::zeros(p, p);
    for k in 0..p {
        t[(k, k)] = tau[k];
        if tau[k] == 0.0 {
            continue;
        }
        let g: Vec<f64> = (0..k).map(|j| gram_col(j, k)).collect();
        for i in 0..k {
            let mut s = 0.0;
            for (j, gj) in g.iter().enumerate().skip(i) {
                s += t[(i, j)] * gj;
            }
            t[(i, k)] = -tau[k] * s;
        }
    }
    t
}

/// `Twy` for a dense panel's reflectors.
pub fn dense_twy(factored: MatRef<'_>, tau: &[f64]) -> Matrix {
    let w = unit_lower(factored);
    triangular_factor(|j, k| dot(w.col(j), w.col(k)), tau)
}

pub fn form_compact_wy(h: &HouseholderFactor) -> CompactWY {
    let w = unit_lower(h.factored.view());
    let t = triangular_factor(|j, k| dot(w.col(j), w.col(k)), &h.tau);
    CompactWY { w, t }
}

impl CompactWY {
    /// Rebuilds the WY pair from a factored panel and its stored `Twy`.
    pub fn from_factored(factored: MatRef<'_>, twy: MatRef<'_>) -> Result<Self> {
        let p = factored.rows().min(factored.cols());
        if twy.rows() != p || twy.cols() != p {
            return shape_err(format!(
                "Twy is {}x{}, panel carries {p} reflectors",
                twy.rows(),
                twy.cols()
            ));
        }
        Ok(Self {
            w: unit_lower(factored),
            t: twy.to_owned(),
        })
    }

    pub fn rows(&self) -> usize {
        self.w.rows()
    }

    pub fn reflectors(&self) -> usize {
        self.w.cols()
    }

    fn check_rows(&self, n: usize) -> Result<()> {
        if n != self.w.rows() {
            return shape_err(format!("operand has {n} rows/cols, WY has {}", self.w.rows()));
        }
        Ok(())
    }

    /// `B <- Q^T B = B - W Twy^T (W^T B)`.
    pub fn apply_qt_left(&self, b: MatMut<'_>) -> Result<()> {
        self.apply_left(Trans::Yes, b)
    }

    /// `B <- Q B = B - W Twy (W^T B)`.
    pub fn apply_q_left(&self, b: MatMut<'_>) -> Result<()> {
        self.apply_left(Trans::No, b)
    }

    fn apply_left(&self, tt: Trans, mut b: MatMut<'_>) -> Result<()> {
        self.check_rows(b.rows())?;
        let p = self.reflectors();
        let mut z = Matrix::zeros(p, b.cols());
        gemm(1.0, Trans::Yes, self.w.view(), Trans::No, b.rb(), 0.0, z.view_mut())?;
        let mut tz = Matrix::zeros(p, b.cols());
        gemm(1.0, tt, self.t.view(), Trans::No, z.view(), 0.0, tz.view_mut())?;
        gemm(-1.0, Trans::No, self.w.view(), Trans::No, tz.view(), 1.0, b.rb_mut())
    }

    /// `B <- B Q = B - (B W) Twy W^T`.
    pub fn apply_q_right(&self, b: MatMut<'_>) -> Result<()> {
        self.apply_right(Trans::No, b)
    }

    /// `B <- B Q^T = B - (B W) Twy^T W^T`.
    pub fn apply_qt_right(&self, b: MatMut<'_>) -> Result<()> {
        self.apply_right(Trans::Yes, b)
    }

    fn apply_right(&self, tt: Trans, mut b: MatMut<'_>) -> Result<()> {
        self.check_rows(b.cols())?;
        let p = self.reflectors();
        let mut z = Matrix::zeros(b.rows(), p);
        gemm(1.0, Trans::No, b.rb(), Trans::No, self.w.view(), 0.0, z.view_mut())?;
        let mut zt = Matrix::zeros(b.rows(), p);
        gemm(1.0, Trans::No, z.view(), tt, self.t.view(), 0.0, zt.view_mut())?;
        gemm(-1.0, Trans::No, zt.view(), Trans::Yes, self.w.view(), 1.0, b.rb_mut())
    }
}

/// Triangular-dense QR: `[R_top; D] = Q_td [R_new; 0]`.
///
/// Reflector `k` is `[e_k; d_k]`, touching row `k` of the top block and every
/// row of `D`; the vectors `d_k` overwrite `D` column by column. `R_top` is read
/// and written on and above its diagonal only, so the storage below it may
/// carry other data.
#[derive(Clone, Debug)]
pub struct TdQrFactor {
    /// `r x b` Householder tails that annihilated `D`.
    pub house: Matrix,
    /// `b x b` upper triangular WY factor.
    pub twy: Matrix,
}

/// Factors `[R_top; D]` in place and returns `Twy`.
pub fn td_qr_in_place(mut r_top: MatMut<'_>, mut d: MatMut<'_>) -> Result<Matrix> {
    let b = r_top.cols();
    if r_top.rows() != b || d.cols() != b {
        return shape_err(format!(
            "td QR needs square R_top and equal widths, got {}x{} over {}x{}",
            r_top.rows(),
            b,
            d.rows(),
            d.cols()
        ));
    }
    let mut tau = Vec::with_capacity(b);
    let mut x = vec![0.0; d.rows() + 1];
    for k in 0..b {
        x[0] = r_top.get(k, k);
        x[1..].copy_from_slice(d.col_mut(k));
        let t = make_reflector(&mut x);
        tau.push(t);
        r_top.set(k, k, x[0]);
        d.col_mut(k).copy_from_slice(&x[1..]);
        if t == 0.0 {
            continue;
        }
        for j in k + 1..b {
            let w = r_top.get(k, j) + dot(&x[1..], d.col_mut(j));
            let tw = t * w;
            r_top.set(k, j, r_top.get(k, j) - tw);
            for (c, &v) in d.col_mut(j).iter_mut().zip(&x[1..]) {
                *c -= tw * v;
            }
        }
    }
    // W = [I; V] so W^T W differs from V^T V only on the diagonal, which the
    // recurrence never reads.
    let house = d.rb();
    Ok(triangular_factor(|j, k| dot(house.col(j), house.col(k)), &tau))
}

pub fn comp_td_qr(r_top: &mut Matrix, d: &mut Matrix) -> Result<TdQrFactor> {
    let twy = td_qr_in_place(r_top.view_mut(), d.view_mut())?;
    Ok(TdQrFactor {
        house: d.clone(),
        twy,
    })
}

fn check_td(house: MatRef<'_>, twy: MatRef<'_>) -> Result<usize> {
    let b = house.cols();
    if twy.rows() != b || twy.cols() != b {
        return shape_err(format!("Twy {}x{} for {b} td reflectors", twy.rows(), twy.cols()));
    }
    Ok(b)
}

/// `(B_top; B_bot) <- Q_td^T (B_top; B_bot)` in `O(b^2 * width)`.
pub fn apply_qt_left_td(
    house: MatRef<'_>,
    twy: MatRef<'_>,
    mut top: MatMut<'_>,
    mut bot: MatMut<'_>,
) -> Result<()> {
    let b = check_td(house, twy)?;
    if top.rows() != b || bot.rows() != house.rows() || top.cols() != bot.cols() {
        return shape_err(format!(
            "td left apply: top {}x{}, bottom {}x{}, reflectors {}x{b}",
            top.rows(),
            top.cols(),
            bot.rows(),
            bot.cols(),
            house.rows()
        ));
    }
    let width = top.cols();
    if width == 0 {
        return Ok(());
    }
    // Z = W^T B = B_top + V^T B_bot
    let mut z = top.to_owned();
    gemm(1.0, Trans::Yes, house, Trans::No, bot.rb(), 1.0, z.view_mut())?;
    let mut tz = Matrix::zeros(b, width);
    gemm(1.0, Trans::Yes, twy, Trans::No, z.view(), 0.0, tz.view_mut())?;
    for j in 0..width {
        for (t, &s) in top.col_mut(j).iter_mut().zip(tz.col(j)) {
            *t -= s;
        }
    }
    gemm(-1.0, Trans::No, house, Trans::No, tz.view(), 1.0, bot.rb_mut())
}

/// `(B_left B_right) <- (B_left B_right) Q_td`.
pub fn apply_q_right_td(
    house: MatRef<'_>,
    twy: MatRef<'_>,
    mut left: MatMut<'_>,
    mut right: MatMut<'_>,
) -> Result<()> {
    let b = check_td(house, twy)?;
    if left.cols() != b || right.cols() != house.rows() || left.rows() != right.rows() {
        return shape_err(format!(
            "td right apply: left {}x{}, right {}x{}, reflectors {}x{b}",
            left.rows(),
            left.cols(),
            right.rows(),
            right.cols(),
            house.rows()
        ));
    }
    let height = left.rows();
    if height == 0 {
        return Ok(());
    }
    // Z = B W = B_left + B_right V
    let mut z = left.to_owned();
    gemm(1.0, Trans::No, right.rb(), Trans::No, house, 1.0, z.view_mut())?;
    let mut zt = Matrix::zeros(height, b);
    gemm(1.0, Trans::No, z.view(), Trans::No, twy, 0.0, zt.view_mut())?;
    for j in 0..b {
        for (l, &s) in left.col_mut(j).iter_mut().zip(zt.col(j)) {
            *l -= s;
        }
    }
    gemm(-1.0, Trans::No, zt.view(), Trans::Yes, house, 1.0, right.rb_mut())
}

impl TdQrFactor {
    pub fn apply_qt_left(&self, top: MatMut<'_>, bot: MatMut<'_>) -> Result<()> {
        apply_qt_left_td(self.house.view(), self.twy.view(), top, bot)
    }

    pub fn apply_q_right(&self, left: MatMut<'_>, right: MatMut<'_>) -> Result<()> {
        apply_q_right_td(self.house.view(), self.twy.view(), left, right)
    }
}
