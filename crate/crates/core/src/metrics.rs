//! Quality diagnostics for rank-revealing factorizations and test matrices.

use std::fmt::{self, Write};
use std::str::FromStr;

use crate::blocked::{UtvConfig, UtvResult};
use crate::error::{Error, Result};
use crate::householder::hqr;
use crate::matrix::{frobenius_norm, gemm, generate_normal_random, spectral_norm_estimate, Matrix, Trans};
use crate::rng::RngState;
use crate::svd::singular_values;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Norm {
    Frobenius,
    Spectral,
}

impl fmt::Display for Norm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Norm::Frobenius => "frobenius",
            Norm::Spectral => "spectral",
        })
    }
}

/// Tolerance and iteration cap of the spectral estimates made here.
const SPECTRAL_TOL: f64 = 1e-12;
const SPECTRAL_ITERS: usize = 2000;

pub fn norm_of(a: &Matrix, norm: Norm) -> f64 {
    match norm {
        Norm::Frobenius => frobenius_norm(a.view()),
        Norm::Spectral => spectral_norm_estimate(a.view(), SPECTRAL_TOL, SPECTRAL_ITERS),
    }
}

fn check_rank(a: &Matrix, k: usize) -> Result<()> {
    let p = a.rows().min(a.cols());
    if k < 1 || k > p {
        return Err(Error::Usage(format!("rank k={k} outside 1..={p}")));
    }
    Ok(())
}

/// `||A - U(:,1:k) T(1:k,:) V^T||` from an explicit residual.
pub fn lowrank_error(a: &Matrix, res: &UtvResult, k: usize, norm: Norm) -> Result<f64> {
    check_rank(a, k)?;
    let (Some(u), Some(v)) = (res.u.as_ref(), res.v.as_ref()) else {
        return Err(Error::Usage("low-rank error needs both U and V".into()));
    };
    let (m, n) = a.shape();
    let mut tv = Matrix::zeros(k, n);
    gemm(1.0, Trans::No, res.t.sub(0, 0, k, n), Trans::Yes, v.view(), 0.0, tv.view_mut())?;
    let mut resid = a.clone();
    gemm(-1.0, Trans::No, u.sub(0, 0, m, k), Trans::No, tv.view(), 1.0, resid.view_mut())?;
    Ok(norm_of(&resid, norm))
}

/// Eckart–Young optimum from a descending singular value list.
pub fn optimal_error_from_sigma(sigma: &[f64], k: usize, norm: Norm) -> f64 {
    let tail = sigma.get(k..).unwrap_or(&[]);
    match norm {
        Norm::Spectral => tail.first().copied().unwrap_or(0.0),
        Norm::Frobenius => {
            // Ascending order keeps the small terms from being absorbed.
            tail.iter().rev().fold(0.0, |acc, s| acc + s * s).sqrt()
        }
    }
}

/// Smallest rank-`k` approximation error: `sigma_{k+1}` (spectral) or the
/// root-sum-square of the trailing singular values (Frobenius).
pub fn optimal_error(a: &Matrix, k: usize, norm: Norm) -> Result<f64> {
    check_rank(a, k)?;
    Ok(optimal_error_from_sigma(&singular_values(a.view())?, k, norm))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DiagFlag {
    /// `|T(k,k) - s_k| / s_k`.
    Relative,
    /// `s_k` is exactly zero; the value is `|T(k,k)|`.
    ZeroSigma,
    /// `s_k <= max(m,n) * eps * s_1`: relative error reported, but `s_k` sits
    /// at the rounding floor of the input and cannot be resolved.
    Unresolved,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiagError {
    pub value: f64,
    pub flag: DiagFlag,
}

/// Per-index accuracy of `|T(k,k)|` as an estimate of `s_k(A)`.
pub fn diag_accuracy(a: &Matrix, res: &UtvResult) -> Result<Vec<DiagError>> {
    diag_accuracy_from_sigma(&singular_values(a.view())?, res, a.rows().max(a.cols()))
}

pub fn diag_accuracy_from_sigma(sigma: &[f64], res: &UtvResult, dim: usize) -> Result<Vec<DiagError>> {
    let d = res.t.diag();
    if d.len() != sigma.len() {
        return Err(Error::Shape(format!("{} diagonal entries vs {} singular values", d.len(), sigma.len())));
    }
    let floor = dim as f64 * f64::EPSILON * sigma.first().copied().unwrap_or(0.0);
    Ok(d.iter()
        .zip(sigma)
        .map(|(t, &s)| {
            let t = t.abs();
            if s == 0.0 {
                DiagError {
                    value: t,
                    flag: DiagFlag::ZeroSigma,
                }
            } else {
                DiagError {
                    value: (t - s).abs() / s,
                    flag: if s <= floor { DiagFlag::Unresolved } else { DiagFlag::Relative },
                }
            }
        })
        .collect())
}

/// Largest relative error over resolvable singular values.
pub fn max_resolved(errs: &[DiagError]) -> f64 {
    errs.iter()
        .filter(|e| e.flag == DiagFlag::Relative)
        .map(|e| e.value)
        .fold(0.0, f64::max)
}

/// Largest relative error over all nonzero singular values.
pub fn max_relative(errs: &[DiagError]) -> f64 {
    errs.iter()
        .filter(|e| e.flag != DiagFlag::ZeroSigma)
        .map(|e| e.value)
        .fold(0.0, f64::max)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TestMatrix {
    Gaussian,
    /// Singular values `beta^i`, `i = 0, 1, ...`.
    Geometric(f64),
    /// Singular values `(r - i) / r` for `i < r`, zero afterwards.
    RankR(usize),
    Identity,
}

impl fmt::Display for TestMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TestMatrix::Gaussian => write!(f, "gaussian"),
            TestMatrix::Geometric(b) => write!(f, "geometric:{b}"),
            TestMatrix::RankR(r) => write!(f, "rank:{r}"),
            TestMatrix::Identity => write!(f, "identity"),
        }
    }
}

impl FromStr for TestMatrix {
    type Err = Error;

    /// Accepts `gaussian`, `identity`, `geometric:0.8` / `geometric(0.8)`,
    /// `rank:5` / `rank_r(5)`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let (name, arg) = match s.find([':', '(']) {
            Some(p) => (&s[..p], Some(s[p + 1..].trim_end_matches(')').trim())),
            None => (s.as_str(), None),
        };
        let bad = || Error::Usage(format!("unknown matrix kind {s:?}"));
        match (name, arg) {
            ("gaussian", None) => Ok(TestMatrix::Gaussian),
            ("identity", None) => Ok(TestMatrix::Identity),
            ("geometric", Some(a)) => {
                let beta: f64 = a.parse().map_err(|_| bad())?;
                if !(beta > 0.0 && beta.is_finite()) {
                    return Err(Error::Usage(format!("geometric ratio must be positive, got {beta}")));
                }
                Ok(TestMatrix::Geometric(beta))
            }
            ("rank" | "rank_r", Some(a)) => Ok(TestMatrix::RankR(a.parse().map_err(|_| bad())?)),
            _ => Err(bad()),
        }
    }
}

/// `m x p` matrix with orthonormal columns from the QR of a Gaussian draw.
fn random_orthonormal(rng: &RngState, m: usize, p: usize) -> Matrix {
    let g = generate_normal_random(&mut rng.clone(), m, p);
    let q = hqr(g).q();
    q.sub(0, 0, m, p).to_owned()
}

fn with_spectrum(m: usize, n: usize, seed: u64, sigma: impl Fn(usize) -> f64) -> Result<Matrix> {
    let p = m.min(n);
    let base = RngState::new(seed);
    let mut u = random_orthonormal(&base.derive(1), m, p);
    let v = random_orthonormal(&base.derive(2), n, p);
    for j in 0..p {
        let s = sigma(j);
        u.col_mut(j).iter_mut().for_each(|x| *x *= s);
    }
    let mut a = Matrix::zeros(m, n);
    gemm(1.0, Trans::No, u.view(), Trans::Yes, v.view(), 0.0, a.view_mut())?;
    Ok(a)
}

pub fn make_test_matrix(kind: TestMatrix, m: usize, n: usize, seed: u64) -> Result<Matrix> {
    if m == 0 || n == 0 {
        return Err(Error::Usage(format!("test matrix must be non-empty, got {m}x{n}")));
    }
    match kind {
        TestMatrix::Gaussian => Ok(generate_normal_random(&mut RngState::new(seed), m, n)),
        TestMatrix::Identity => Ok(Matrix::eye(m, n)),
        TestMatrix::Geometric(beta) => with_spectrum(m, n, seed, |i| beta.powi(i as i32)),
        TestMatrix::RankR(r) => with_spectrum(m, n, seed, |i| if i < r { (r - i) as f64 / r as f64 } else { 0.0 }),
    }
}

/// The scaled-time convention: `seconds / n^3 * 1e10`.
pub fn scaled_time(seconds: f64, n: usize) -> f64 {
    let nf = n as f64;
    seconds / (nf * nf * nf) * 1e10
}

#[derive(Clone, Debug, PartialEq)]
pub struct QualityRow {
    pub k: usize,
    pub err_utv: f64,
    pub err_opt: f64,
    /// `err_utv / err_opt`; NaN when both vanish.
    pub ratio: f64,
    /// `|T(k,k) - s_k| / s_k` for the `k`-th (1-based) diagonal entry.
    pub diag_relerr: f64,
}

#[derive(Clone, Debug)]
pub struct QualityReport {
    pub rows: Vec<QualityRow>,
    pub norm: Norm,
    pub norm_a: f64,
    pub config: UtvConfig,
}

impl QualityReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,err_utv,err_opt,ratio,diag_relerr\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{:e},{:e},{},{:e}", r.k, r.err_utv, r.err_opt, r.ratio, r.diag_relerr);
        }
        s
    }

    /// Eckart–Young: no rank-`k` approximation beats the optimum.
    pub fn dominance_holds(&self, slack: f64) -> bool {
        self.rows.iter().all(|r| r.err_opt <= r.err_utv + slack * self.norm_a)
    }
}

/// Errors at each requested rank `k` (1-based, `1..=min(m,n)`).
pub fn quality_report(a: &Matrix, res: &UtvResult, ks: &[usize], norm: Norm) -> Result<QualityReport> {
    let sigma = singular_values(a.view())?;
    let diag = diag_accuracy_from_sigma(&sigma, res, a.rows().max(a.cols()))?;
    let rows = ks
        .iter()
        .map(|&k| {
            let err_utv = lowrank_error(a, res, k, norm)?;
            let err_opt = optimal_error_from_sigma(&sigma, k, norm);
            Ok(QualityRow {
                k,
                err_utv,
                err_opt,
                ratio: err_utv / err_opt,
                diag_relerr: diag[k - 1].value,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(QualityReport {
        rows,
        norm,
        norm_a: norm_of(a, norm),
        config: res.config.clone(),
    })
}

/// Block-boundary ranks `b, 2b, ...` strictly below `min(m,n)`.
pub fn block_boundaries(m: usize, n: usize, b: usize) -> Vec<usize> {
    (1..).map(|i| i * b).take_while(|&k| k < m.min(n)).collect()
}

/// Median of a non-empty sample (mean of the middle pair for even sizes).
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    assert!(n > 0, "median of an empty sample");
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
