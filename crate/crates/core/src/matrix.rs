//! Dense column-major storage, strided views, block tiling and the Level-3
//! primitives the factorizations are built from.
//!
//! Element `(i, j)` of a matrix with leading dimension `ld` lives at offset
//! `i + j * ld`. An owned [`Matrix`] always has `ld == rows`.

use std::fmt;
use std::ops::{Index, IndexMut, Range};

use crate::error::{shape_err, Error, Result};
use crate::rng::RngState;

#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, " ")?;
            for j in 0..self.cols {
                write!(f, " {:12.5e}", self[(i, j)])?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::eye(n, n)
    }

    /// `rows x cols` with ones on the main diagonal.
    pub fn eye(rows: usize, cols: usize) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows.min(cols) {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_col_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return shape_err(format!(
                "{} values supplied for a {rows}x{cols} matrix",
                data.len()
            ));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds from a slice of equally long rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, |r| r.as_ref().len());
        let mut out = Self::zeros(m, n);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != n {
                return shape_err(format!("row {i} has {} entries, expected {n}", r.len()));
            }
            for (j, &x) in r.iter().enumerate() {
                out[(i, j)] = x;
            }
        }
        Ok(out)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for j in 0..cols {
            for i in 0..rows {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_diag(rows: usize, cols: usize, diag: &[f64]) -> Self {
        let mut m = Self::zeros(rows, cols);
        for (i, &d) in diag.iter().enumerate().take(rows.min(cols)) {
            m[(i, i)] = d;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn view(&self) -> MatRef<'_> {
        MatRef {
            data: &self.data,
            rows: self.rows,
            cols: self.cols,
            ld: self.rows.max(1),
        }
    }

    pub fn view_mut(&mut self) -> MatMut<'_> {
        let ld = self.rows.max(1);
        MatMut {
            data: &mut self.data,
            rows: self.rows,
            cols: self.cols,
            ld,
        }
    }

    /// View of rows `r0..r0+nr`, columns `c0..c0+nc`.
    pub fn sub(&self, r0: usize, c0: usize, nr: usize, nc: usize) -> MatRef<'_> {
        self.view().sub(r0, c0, nr, nc)
    }

    pub fn sub_mut(&mut self, r0: usize, c0: usize, nr: usize, nc: usize) -> MatMut<'_> {
        self.view_mut().into_sub(r0, c0, nr, nc)
    }

    pub fn transpose(&self) -> Matrix {
        self.view().transpose()
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Entries strictly below the diagonal set to zero.
    pub fn zero_strict_lower(&mut self) {
        self.view_mut().zero_strict_lower();
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    /// `self * other`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        matmul(self.view(), Trans::No, other.view(), Trans::No)
    }

    /// Entrywise `self - other`.
    pub fn sub_matrix(&self, other: &Matrix) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return shape_err(format!(
                "cannot subtract {:?} from {:?}",
                other.shape(),
                self.shape()
            ));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i + j * self.rows]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i + j * self.rows]
    }
}

#[inline]
fn span(r0: usize, c0: usize, nr: usize, nc: usize, ld: usize) -> Range<usize> {
    if nr == 0 || nc == 0 {
        0..0
    } else {
        let start = r0 + c0 * ld;
        start..start + (nc - 1) * ld + nr
    }
}

/// Borrowed strided view.
#[derive(Clone, Copy)]
pub struct MatRef<'a> {
    data: &'a [f64],
    rows: usize,
    cols: usize,
    ld: usize,
}

impl<'a> MatRef<'a> {
    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn ld(&self) -> usize {
        self.ld
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i + j * self.ld]
    }

    #[inline]
    pub fn col(&self, j: usize) -> &'a [f64] {
        if self.rows == 0 {
            return &[];
        }
        &self.data[j * self.ld..j * self.ld + self.rows]
    }

    pub fn sub(self, r0: usize, c0: usize, nr: usize, nc: usize) -> MatRef<'a> {
        assert!(
            r0 + nr <= self.rows && c0 + nc <= self.cols,
            "sub-view {r0}+{nr} x {c0}+{nc} exceeds {}x{}",
            self.rows,
            self.cols
        );
        MatRef {
            data: &self.data[span(r0, c0, nr, nc, self.ld)],
            rows: nr,
            cols: nc,
            ld: self.ld,
        }
    }

    pub fn to_owned(&self) -> Matrix {
        Matrix::from_fn(self.rows, self.cols, |i, j| self.get(i, j))
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }
}

/// Mutably borrowed strided view.
pub struct MatMut<'a> {
    data: &'a mut [f64],
    rows: usize,
    cols: usize,
    ld: usize,
}

impl<'a> MatMut<'a> {
    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i + j * self.ld]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i + j * self.ld] = v;
    }

    #[inline]
    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        if self.rows == 0 {
            return &mut [];
        }
        &mut self.data[j * self.ld..j * self.ld + self.rows]
    }

    pub fn rb(&self) -> MatRef<'_> {
        MatRef {
            data: self.data,
            rows: self.rows,
            cols: self.cols,
            ld: self.ld,
        }
    }

    pub fn rb_mut(&mut self) -> MatMut<'_> {
        MatMut {
            data: self.data,
            rows: self.rows,
            cols: self.cols,
            ld: self.ld,
        }
    }

    pub fn sub_mut(&mut self, r0: usize, c0: usize, nr: usize, nc: usize) -> MatMut<'_> {
        self.rb_mut().into_sub(r0, c0, nr, nc)
    }

    pub fn into_sub(self, r0: usize, c0: usize, nr: usize, nc: usize) -> MatMut<'a> {
        assert!(
            r0 + nr <= self.rows && c0 + nc <= self.cols,
            "sub-view {r0}+{nr} x {c0}+{nc} exceeds {}x{}",
            self.rows,
            self.cols
        );
        let range = span(r0, c0, nr, nc, self.ld);
        MatMut {
            data: &mut self.data[range],
            rows: nr,
            cols: nc,
            ld: self.ld,
        }
    }

    pub fn fill(&mut self, v: f64) {
        for j in 0..self.cols {
            self.col_mut(j).fill(v);
        }
    }

    pub fn copy_from(&mut self, src: MatRef<'_>) -> Result<()> {
        if (src.rows, src.cols) != (self.rows, self.cols) {
            return shape_err(format!(
                "copy {}x{} into {}x{}",
                src.rows, src.cols, self.rows, self.cols
            ));
        }
        for j in 0..self.cols {
            self.col_mut(j).copy_from_slice(src.col(j));
        }
        Ok(())
    }

    pub fn zero_strict_lower(&mut self) {
        for j in 0..self.cols.min(self.rows) {
            self.col_mut(j)[j + 1..].fill(0.0);
        }
    }

    pub fn to_owned(&self) -> Matrix {
        self.rb().to_owned()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Trans {
    No,
    Yes,
}

impl Trans {
    fn dims(self, a: MatRef<'_>) -> (usize, usize) {
        match self {
            Trans::No => (a.rows, a.cols),
            Trans::Yes => (a.cols, a.rows),
        }
    }
}

/// `C <- alpha * op(A) * op(B) + beta * C`.
///
/// Every output element is accumulated as `acc = 0; for p in 0..k { acc += a_ip * b_pj }`
/// with `p` ascending, then stored as `alpha * acc + beta * c_ij` (or `alpha * acc`
/// when `beta == 0`). The column sweeps below vectorize across `i` only, so the
/// per-element operation sequence and therefore the result bits are fixed.
pub fn gemm(
    alpha: f64,
    trans_a: Trans,
    a: MatRef<'_>,
    trans_b: Trans,
    b: MatRef<'_>,
    beta: f64,
    mut c: MatMut<'_>,
) -> Result<()> {
    let (m, k) = trans_a.dims(a);
    let (kb, n) = trans_b.dims(b);
    if k != kb || c.rows != m || c.cols != n {
        return shape_err(format!(
            "gemm: op(A) {m}x{k}, op(B) {kb}x{n}, C {}x{}",
            c.rows, c.cols
        ));
    }
    if m == 0 || n == 0 {
        return Ok(());
    }

    // op(A) as a contiguous m x k column-major panel.
    let packed_a;
    let opa: &[f64] = match trans_a {
        Trans::No if a.ld == m || k <= 1 => &a.data[..m * k],
        Trans::No => {
            packed_a = a.to_owned().into_vec();
            &packed_a
        }
        Trans::Yes => {
            packed_a = a.transpose().into_vec();
            &packed_a
        }
    };
    // op(B) as a contiguous k x n column-major panel.
    let mut opb = Vec::with_capacity(k * n);
    for j in 0..n {
        for p in 0..k {
            opb.push(match trans_b {
                Trans::No => b.get(p, j),
                Trans::Yes => b.get(j, p),
            });
        }
    }

    let mut acc = vec![0.0; 4 * m];
    let mut j = 0;
    while j < n {
        let nb = (n - j).min(4);
        acc[..nb * m].fill(0.0);
        if nb == 4 {
            let (acc0, rest) = acc.split_at_mut(m);
            let (acc1, rest) = rest.split_at_mut(m);
            let (acc2, acc3) = rest.split_at_mut(m);
            for p in 0..k {
                let s0 = opb[p + j * k];
                let s1 = opb[p + (j + 1) * k];
                let s2 = opb[p + (j + 2) * k];
                let s3 = opb[p + (j + 3) * k];
                let col = &opa[p * m..(p + 1) * m];
                for ((((&x, c0), c1), c2), c3) in col
                    .iter()
                    .zip(acc0.iter_mut())
                    .zip(acc1.iter_mut())
                    .zip(acc2.iter_mut())
                    .zip(acc3.iter_mut())
                {
                    *c0 += x * s0;
                    *c1 += x * s1;
                    *c2 += x * s2;
                    *c3 += x * s3;
                }
            }
        } else {
            for jj in 0..nb {
                let accj = &mut acc[jj * m..(jj + 1) * m];
                for p in 0..k {
                    let s = opb[p + (j + jj) * k];
                    let col = &opa[p * m..(p + 1) * m];
                    for (&x, cv) in col.iter().zip(accj.iter_mut()) {
                        *cv += x * s;
                    }
                }
            }
        }
        for jj in 0..nb {
            let accj = &acc[jj * m..(jj + 1) * m];
            let cj = c.col_mut(j + jj);
            if beta == 0.0 {
                for (cv, &s) in cj.iter_mut().zip(accj) {
                    *cv = alpha * s;
                }
            } else {
                for (cv, &s) in cj.iter_mut().zip(accj) {
                    *cv = alpha * s + beta * *cv;
                }
            }
        }
        j += nb;
    }
    Ok(())
}

/// Allocating `op(A) * op(B)`.
pub fn matmul(a: MatRef<'_>, trans_a: Trans, b: MatRef<'_>, trans_b: Trans) -> Result<Matrix> {
    let (m, _) = trans_a.dims(a);
    let (_, n) = trans_b.dims(b);
    let mut c = Matrix::zeros(m, n);
    gemm(1.0, trans_a, a, trans_b, b, 0.0, c.view_mut())?;
    Ok(c)
}

/// `m x n` i.i.d. standard normals filled in column-major order; advances `rng` by `m * n`.
pub fn generate_normal_random(rng: &mut RngState, m: usize, n: usize) -> Matrix {
    let start = rng.position();
    let out = Matrix::from_fn(m, n, |i, j| rng.normal_at(start + (i + j * m) as u64));
    rng.advance((m * n) as u64);
    out
}

/// Frobenius norm with Neumaier-compensated accumulation of the squares.
pub fn frobenius_norm(a: MatRef<'_>) -> f64 {
    let scale = (0..a.cols)
        .flat_map(|j| a.col(j).iter())
        .fold(0.0_f64, |m, x| m.max(x.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return scale;
    }
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for j in 0..a.cols {
        for &x in a.col(j) {
            let y = (x / scale) * (x / scale);
            let t = sum + y;
            if sum.abs() >= y.abs() {
                comp += (sum - t) + y;
            } else {
                comp += (y - t) + sum;
            }
            sum = t;
        }
    }
    scale * (sum + comp).sqrt()
}

/// Power iteration on `A^T A` from a fixed seeded start vector.
///
/// Returns `||A x||` for the final unit iterate `x`, which never exceeds the
/// true largest singular value, so the estimate is biased low. Stops when the
/// relative change drops below `tol` or after `max_iter` sweeps.
pub fn spectral_norm_estimate(a: MatRef<'_>, tol: f64, max_iter: usize) -> f64 {
    let (m, n) = (a.rows, a.cols);
    if m == 0 || n == 0 {
        return 0.0;
    }
    let rng = RngState::new(0x5EED_5EED);
    let mut x: Vec<f64> = (0..n as u64).map(|p| rng.normal_at(p)).collect();
    let mut sigma = 0.0_f64;
    for _ in 0..max_iter.max(1) {
        let nx = norm2(&x);
        if nx == 0.0 {
            return 0.0;
        }
        x.iter_mut().for_each(|v| *v /= nx);
        let mut y = vec![0.0; m];
        for (j, &xj) in x.iter().enumerate() {
            for (yi, &aij) in y.iter_mut().zip(a.col(j)) {
                *yi += aij * xj;
            }
        }
        let next = norm2(&y);
        for (j, xj) in x.iter_mut().enumerate() {
            *xj = dot(a.col(j), &y);
        }
        let converged = (next - sigma).abs() <= tol * next;
        sigma = next;
        if converged || sigma == 0.0 {
            break;
        }
    }
    sigma
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    let scale = a.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    scale * a.iter().map(|x| (x / scale) * (x / scale)).sum::<f64>().sqrt()
}

/// A `b x b` tiling of a parent matrix; edge blocks may be smaller.
pub struct BlockGrid<'a> {
    parent: &'a mut Matrix,
    b: usize,
    block_rows: usize,
    block_cols: usize,
}

impl<'a> BlockGrid<'a> {
    pub fn new(parent: &'a mut Matrix, b: usize) -> Result<Self> {
        if b == 0 {
            return Err(Error::Config("block size must be at least 1".into()));
        }
        let block_rows = parent.rows().div_ceil(b);
        let block_cols = parent.cols().div_ceil(b);
        Ok(Self {
            parent,
            b,
            block_rows,
            block_cols,
        })
    }

    pub fn block_size(&self) -> usize {
        self.b
    }

    pub fn block_rows(&self) -> usize {
        self.block_rows
    }

    pub fn block_cols(&self) -> usize {
        self.block_cols
    }

    /// Parent row and column ranges covered by block `(i, j)`.
    pub fn block_range(&self, i: usize, j: usize) -> Result<(Range<usize>, Range<usize>)> {
        if i >= self.block_rows || j >= self.block_cols {
            return Err(Error::Index(format!(
                "block ({i},{j}) outside a {}x{} grid",
                self.block_rows, self.block_cols
            )));
        }
        let b = self.b;
        Ok((
            i * b..((i + 1) * b).min(self.parent.rows()),
            j * b..((j + 1) * b).min(self.parent.cols()),
        ))
    }

    pub fn block(&self, i: usize, j: usize) -> Result<MatRef<'_>> {
        let (r, c) = self.block_range(i, j)?;
        Ok(self.parent.sub(r.start, c.start, r.len(), c.len()))
    }

    /// Writable view aliasing the parent storage.
    pub fn block_mut(&mut self, i: usize, j: usize) -> Result<MatMut<'_>> {
        let (r, c) = self.block_range(i, j)?;
        Ok(self.parent.sub_mut(r.start, c.start, r.len(), c.len()))
    }
}
