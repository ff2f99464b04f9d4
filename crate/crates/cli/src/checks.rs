//! Self-checks shared by `randutv verify` and the acceptance target.
//!
//! Each check returns a [`Check`] whose `Display` is a single
//! `PASS`/`FAIL` line with the measured numbers.

use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use randutv::ab::{randutv_ab_traced, transcript};
use randutv::block_cyclic::{distribution_report, local_index, owner, GridSpec};
use randutv::householder::{comp_td_qr, hqr};
use randutv::matrix::{frobenius_norm, generate_normal_random, matmul};
use randutv::metrics::{
    block_boundaries, diag_accuracy_from_sigma, lowrank_error, make_test_matrix, max_relative, max_resolved, median,
    optimal_error_from_sigma, scaled_time, Norm, TestMatrix,
};
use randutv::scheduler::{execute, max_concurrency, validate_trace, Dependent, TaskGraph};
use randutv::svd::{singular_values, svd_dense, DEFAULT_TOL};
use randutv::{analyze, randutv, Matrix, Result, RngState, Trans, UtvConfig, UtvResult};

use crate::bench::{bench_csv, parse_bench_csv, run_bench, BenchPlan};
use crate::{factorize_with, Algo};

/// The checked-in task transcript for a 2x2-block matrix, q = 0, no U/V.
pub const ANALYZER_TRANSCRIPT: &str = include_str!("../../core/tests/data/analyzer_2x2_q0.txt");

#[derive(Clone, Debug)]
pub struct Check {
    pub id: u32,
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn new(id: u32, name: &'static str, pass: bool, detail: impl Into<String>) -> Self {
        Self {
            id,
            name,
            pass,
            detail: detail.into(),
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.pass { "PASS" } else { "FAIL" };
        write!(f, "{tag} [{}] {}: {}", self.id, self.name, self.detail)
    }
}

pub const VALIDITY_SHAPES: [(usize, usize); 4] = [(64, 64), (96, 48), (48, 96), (100, 64)];

fn orth_defect(q: &Matrix) -> f64 {
    let g = matmul(q.view(), Trans::Yes, q.view(), Trans::No).expect("square gram");
    frobenius_norm(g.sub_matrix(&Matrix::identity(q.cols())).expect("same shape").view())
}

fn residual(a: &Matrix, r: &UtvResult) -> f64 {
    let rec = r.reconstruct().expect("factors were requested");
    frobenius_norm(rec.sub_matrix(a).expect("same shape").view())
}

/// Factorization validity and spectrum preservation over the shape/config
/// grid, for both algorithms. Returns the two checks together because they
/// share the factorizations.
pub fn validity_and_spectrum(bs: &[usize], qs: &[usize], workers: usize) -> Result<(Check, Check)> {
    let eps = f64::EPSILON;
    let (mut worst_res, mut worst_orth, mut worst_spec) = (0.0_f64, 0.0_f64, 0.0_f64);
    let (mut ok_valid, mut ok_spec) = (true, true);
    let mut first_bad = None;
    let mut runs = 0;
    for (si, &(m, n)) in VALIDITY_SHAPES.iter().enumerate() {
        let a = make_test_matrix(TestMatrix::Gaussian, m, n, 1000 + si as u64)?;
        let norm_a = frobenius_norm(a.view());
        let sigma = svd_dense(a.view(), DEFAULT_TOL)?.s;
        let dim = m.max(n) as f64;
        for &b in bs {
            for &q in qs {
                for algo in [Algo::Blocked, Algo::Ab] {
                    let cfg = UtvConfig::new(b, q, 7 + b as u64 + q as u64);
                    let r = factorize_with(&a, algo, &cfg, workers)?;
                    runs += 1;
                    let res = residual(&a, &r) / (dim * eps * norm_a);
                    let orth = orth_defect(r.u.as_ref().unwrap()).max(orth_defect(r.v.as_ref().unwrap())) / (dim * eps);
                    let st = singular_values(r.t.view())?;
                    let spec = st.iter().zip(&sigma).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / sigma[0];
                    worst_res = worst_res.max(res);
                    worst_orth = worst_orth.max(orth);
                    worst_spec = worst_spec.max(spec);
                    let v = res <= 100.0 && orth <= 100.0;
                    let s = spec <= 1e-11;
                    if (!v || !s) && first_bad.is_none() {
                        first_bad = Some(format!("{algo} {m}x{n} b={b} q={q}"));
                    }
                    ok_valid &= v;
                    ok_spec &= s;
                }
            }
        }
    }
    let bad = first_bad.map(|s| format!("; first failure {s}")).unwrap_or_default();
    Ok((
        Check::new(
            1,
            "factorization validity",
            ok_valid,
            format!(
                "{runs} runs; worst residual {worst_res:.3} and worst orthogonality {worst_orth:.3} \
                 in units of max(m,n)*eps (limit 100){bad}"
            ),
        ),
        Check::new(
            2,
            "spectrum preservation",
            ok_spec,
            format!("{runs} runs; worst max|sigma(T)-sigma(A)|/sigma_1 = {worst_spec:.2e} (limit 1e-11){bad}"),
        ),
    ))
}

/// The task stream for `m = n = 2b`, `q = 0`, no U/V, against the checked-in transcript.
pub fn analyzer_transcript() -> Result<Check> {
    let mut mismatch = None;
    for b in [1, 8, 32] {
        let tasks = analyze(&Matrix::zeros(2 * b, 2 * b), &UtvConfig::new(b, 0, 0).without_uv())?;
        let got = transcript(&tasks);
        if got != ANALYZER_TRANSCRIPT {
            let line = got
                .lines()
                .zip(ANALYZER_TRANSCRIPT.lines())
                .position(|(x, y)| x != y)
                .map_or("length".to_string(), |i| format!("line {}", i + 1));
            mismatch = Some(format!("b={b}: differs at {line}"));
            break;
        }
    }
    let n = ANALYZER_TRANSCRIPT.lines().count();
    Ok(match mismatch {
        None => Check::new(3, "analyzer transcript", true, format!("{n} tasks match for b in {{1,8,32}}")),
        Some(m) => Check::new(3, "analyzer transcript", false, m),
    })
}

fn bit_equal(x: &Matrix, y: &Matrix) -> bool {
    x.shape() == y.shape() && x.as_slice().iter().zip(y.as_slice()).all(|(p, q)| p.to_bits() == q.to_bits())
}

fn same_result(x: &UtvResult, y: &UtvResult) -> bool {
    let opt = |p: &Option<Matrix>, q: &Option<Matrix>| match (p, q) {
        (Some(p), Some(q)) => bit_equal(p, q),
        (None, None) => true,
        _ => false,
    };
    bit_equal(&x.t, &y.t) && opt(&x.u, &y.u) && opt(&x.v, &y.v)
}

/// Algorithm-by-blocks output is bit-identical across worker counts.
pub fn schedule_determinism(n: usize, b: usize, q: usize, seeds: &[u64], workers: &[usize]) -> Result<Check> {
    let mut bad = Vec::new();
    for &seed in seeds {
        let a = make_test_matrix(TestMatrix::Gaussian, n, n, 500 + seed)?;
        let cfg = UtvConfig::new(b, q, seed);
        let reference = randutv::randutv_ab(&a, &cfg, workers[0])?;
        for &w in &workers[1..] {
            if !same_result(&reference, &randutv::randutv_ab(&a, &cfg, w)?) {
                bad.push(format!("seed {seed} workers {w}"));
            }
        }
    }
    let detail = format!("{n}x{n} b={b} q={q}, seeds {seeds:?}, workers {workers:?}");
    Ok(if bad.is_empty() {
        Check::new(4, "schedule determinism", true, format!("{detail}: T, U, V bit-identical"))
    } else {
        Check::new(4, "schedule determinism", false, format!("{detail}: differs for {}", bad.join(", ")))
    })
}

struct FuzzNode {
    reads: Vec<u32>,
    writes: Vec<u32>,
}

impl Dependent for FuzzNode {
    type Id = u32;
    fn reads(&self) -> &[u32] {
        &self.reads
    }
    fn writes(&self) -> &[u32] {
        &self.writes
    }
    fn label(&self) -> String {
        "fuzz".into()
    }
}

fn random_graph(rng: &mut StdRng, max_nodes: usize) -> Result<TaskGraph<FuzzNode>> {
    let n = rng.gen_range(1..=max_nodes);
    let blocks = rng.gen_range(1..=40u32);
    let nodes = (0..n)
        .map(|_| {
            let mut ids: Vec<u32> = (0..rng.gen_range(1..=4)).map(|_| rng.gen_range(0..blocks)).collect();
            ids.sort_unstable();
            ids.dedup();
            let split = rng.gen_range(0..=ids.len());
            FuzzNode {
                reads: ids[..split].to_vec(),
                writes: ids[split..].to_vec(),
            }
        })
        .collect();
    TaskGraph::build(nodes)
}

/// Random DAGs on random worker counts: valid topological traces, each task
/// exactly once, no hang.
pub fn dag_fuzz(rounds: usize, max_nodes: usize, seed: u64) -> Result<Check> {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut total = 0;
    for round in 0..rounds {
        let g = random_graph(&mut rng, max_nodes)?;
        let workers = rng.gen_range(1..=8);
        let ran: Vec<AtomicUsize> = (0..g.len()).map(|_| AtomicUsize::new(0)).collect();
        let events = execute(&g, workers, |t, _| {
            ran[t].fetch_add(1, Ordering::Relaxed);
            Ok(())
        })?;
        total += g.len();
        let once = ran.iter().all(|c| c.load(Ordering::Relaxed) == 1);
        if let Err(e) = validate_trace(&g, &events).and_then(|_| {
            once.then_some(()).ok_or_else(|| randutv::Error::Graph("a task ran more than once".into()))
        }) {
            return Ok(Check::new(5, "linear-extension fuzz", false, format!("round {round} ({workers} workers): {e}")));
        }
    }
    Ok(Check::new(
        5,
        "linear-extension fuzz",
        true,
        format!("{rounds} DAGs (up to {max_nodes} nodes, {total} tasks total), 1-8 workers"),
    ))
}

/// `comp_td_qr` against plain Householder QR of the stacked matrix.
pub fn td_qr_oracle(instances: usize, seed: u64) -> Result<Check> {
    let sizes = [2, 4, 8, 16];
    let mut worst = 0.0_f64;
    for inst in 0..instances {
        let b = sizes[inst % sizes.len()];
        let mut rng = RngState::new(seed).derive(inst as u64);
        let mut top = generate_normal_random(&mut rng, b, b);
        top.zero_strict_lower();
        let mut bot = generate_normal_random(&mut rng, b, b);
        let mut stacked = Matrix::zeros(2 * b, b);
        stacked.sub_mut(0, 0, b, b).copy_from(top.view())?;
        stacked.sub_mut(b, 0, b, b).copy_from(bot.view())?;
        let oracle = hqr(stacked).r();
        comp_td_qr(&mut top, &mut bot)?;
        let scale = frobenius_norm(oracle.view());
        for j in 0..b {
            for i in 0..=j {
                worst = worst.max((top[(i, j)].abs() - oracle[(i, j)].abs()).abs() / scale);
            }
        }
    }
    Ok(Check::new(
        6,
        "td-QR oracle",
        worst <= 1e-12,
        format!("{instances} instances, b in {{2,4,8,16}}; worst ||R| - |R_hqr|| / ||R|| = {worst:.2e} (limit 1e-12)"),
    ))
}

/// Per-seed quality measurements for one `q`.
#[derive(Clone, Debug)]
pub struct QualitySample {
    pub q: usize,
    /// `ratios[s][i]` is err_utv/err_opt at `ks[i]` for seed `s`.
    pub ratios: Vec<Vec<f64>>,
    /// Max relative diagonal error over all nonzero singular values.
    pub diag_all: Vec<f64>,
    /// Same, restricted to singular values above the rounding floor.
    pub diag_resolved: Vec<f64>,
}

impl QualitySample {
    pub fn median_ratio(&self, i: usize) -> f64 {
        median(&self.ratios.iter().map(|r| r[i]).collect::<Vec<_>>())
    }
}

#[derive(Clone, Debug)]
pub struct QualityStudy {
    pub n: usize,
    pub b: usize,
    pub matrix_seed: u64,
    pub seeds: Vec<u64>,
    pub ks: Vec<usize>,
    /// `resolvable[i]`: sigma_{k+1} is above `n * eps * sigma_1`.
    pub resolvable: Vec<bool>,
    pub samples: Vec<QualitySample>,
}

/// Frobenius error ratios at block boundaries and diagonal accuracy for
/// geometric(0.8) input, over `seeds` and each of `qs`.
pub fn quality_study(n: usize, b: usize, matrix_seed: u64, seeds: &[u64], qs: &[usize]) -> Result<QualityStudy> {
    let a = make_test_matrix(TestMatrix::Geometric(0.8), n, n, matrix_seed)?;
    let sigma = singular_values(a.view())?;
    let ks = block_boundaries(n, n, b);
    let floor = n as f64 * f64::EPSILON * sigma[0];
    let resolvable = ks.iter().map(|&k| sigma[k] > floor).collect();
    let mut samples = Vec::new();
    for &q in qs {
        let mut s = QualitySample {
            q,
            ratios: Vec::new(),
            diag_all: Vec::new(),
            diag_resolved: Vec::new(),
        };
        for &seed in seeds {
            let res = randutv(&a, &UtvConfig::new(b, q, seed))?;
            let ratios = ks
                .iter()
                .map(|&k| Ok(lowrank_error(&a, &res, k, Norm::Frobenius)? / optimal_error_from_sigma(&sigma, k, Norm::Frobenius)))
                .collect::<Result<Vec<_>>>()?;
            let diag = diag_accuracy_from_sigma(&sigma, &res, n)?;
            s.ratios.push(ratios);
            s.diag_all.push(max_relative(&diag));
            s.diag_resolved.push(max_resolved(&diag));
        }
        samples.push(s);
    }
    Ok(QualityStudy {
        n,
        b,
        matrix_seed,
        seeds: seeds.to_vec(),
        ks,
        resolvable,
        samples,
    })
}

impl QualityStudy {
    fn sample(&self, q: usize) -> &QualitySample {
        self.samples.iter().find(|s| s.q == q).expect("q was part of the study")
    }

    /// The criterion as stated: median ratio at q_hi at most `limit` at every
    /// block boundary, and the median of the per-seed max diagonal error at
    /// q_hi no larger than at q_lo.
    pub fn check(&self, q_lo: usize, q_hi: usize, limit: f64) -> Check {
        let hi = self.sample(q_hi);
        let lo = self.sample(q_lo);
        let med: Vec<f64> = (0..self.ks.len()).map(|i| hi.median_ratio(i)).collect();
        let worst = med.iter().copied().fold(0.0, f64::max);
        let worst_k = self.ks[med.iter().position(|&x| x == worst).unwrap_or(0)];
        let (d_hi, d_lo) = (median(&hi.diag_all), median(&lo.diag_all));
        let pass = med.iter().all(|&r| r <= limit) && d_hi <= d_lo;
        let listing: Vec<String> = self.ks.iter().zip(&med).map(|(k, r)| format!("{k}:{r:.3}")).collect();
        Check::new(
            7,
            "near-optimality",
            pass,
            format!(
                "geometric(0.8) {n}x{n} b={b} q={q_hi}, {s} seeds; median ratio by k [{l}], worst {worst:.3} at k={worst_k} \
                 (limit {limit}); median max diag error q={q_hi} {d_hi:.3e} vs q={q_lo} {d_lo:.3e}",
                n = self.n,
                b = self.b,
                s = self.seeds.len(),
                l = listing.join(" "),
            ),
        )
    }

    /// The same statistics restricted to ranks whose tail singular values
    /// sit above the rounding floor.
    pub fn resolvable_summary(&self, q_lo: usize, q_hi: usize) -> String {
        let mut out = String::new();
        for s in [self.sample(q_lo), self.sample(q_hi)] {
            let w = (0..self.ks.len())
                .filter(|&i| self.resolvable[i])
                .map(|i| s.median_ratio(i))
                .fold(0.0, f64::max);
            out.push_str(&format!(
                "q={}: worst median ratio over resolvable k {w:.3}, median resolved diag error {:.3e}; ",
                s.q,
                median(&s.diag_resolved)
            ));
        }
        let unres: Vec<usize> = self.ks.iter().zip(&self.resolvable).filter(|(_, r)| !**r).map(|(k, _)| *k).collect();
        out.push_str(&format!("ranks with optimal error below rounding level: {unres:?}"));
        out
    }
}

/// Owner and local block indices for the 16x24 matrix, 4x4 blocks on a 2x3
/// grid.
pub fn block_cyclic_example() -> Result<Check> {
    const OWNERS: [[usize; 6]; 4] = [[0, 1, 2, 0, 1, 2], [3, 4, 5, 3, 4, 5], [0, 1, 2, 0, 1, 2], [3, 4, 5, 3, 4, 5]];
    const LOCAL: [[(usize, usize); 6]; 4] = [
        [(0, 0), (0, 0), (0, 0), (0, 1), (0, 1), (0, 1)],
        [(0, 0), (0, 0), (0, 0), (0, 1), (0, 1), (0, 1)],
        [(1, 0), (1, 0), (1, 0), (1, 1), (1, 1), (1, 1)],
        [(1, 0), (1, 0), (1, 0), (1, 1), (1, 1), (1, 1)],
    ];
    let spec = GridSpec::new(4, 4, 2, 3)?;
    let mut bad = Vec::new();
    for r in 0..4 {
        for c in 0..6 {
            if owner(&spec, r, c) != OWNERS[r][c] || local_index(&spec, r, c) != LOCAL[r][c] {
                bad.push(format!("({r},{c})"));
            }
        }
    }
    let counts = distribution_report(&spec, 16, 24);
    let even = counts.iter().all(|&c| c == 64) && counts.len() == 6;
    Ok(Check::new(
        8,
        "block-cyclic example",
        bad.is_empty() && even,
        if bad.is_empty() {
            format!("24 block owners and local indices match; elements per process {counts:?}")
        } else {
            format!("mismatched blocks {}; elements per process {counts:?}", bad.join(" "))
        },
    ))
}

/// Speedup of `workers` over one worker for the algorithm-by-blocks, and the
/// peak number of overlapping tasks in the multi-worker trace.
pub fn scalability(n: usize, b: usize, q: usize, workers: usize, seed: u64) -> Result<Check> {
    let cores = std::thread::available_parallelism().map_or(1, |c| c.get());
    let a = make_test_matrix(TestMatrix::Gaussian, n, n, seed)?;
    let cfg = UtvConfig::new(b, q, seed);
    let t0 = Instant::now();
    randutv_ab_traced(&a, &cfg, 1)?;
    let t1 = t0.elapsed().as_secs_f64();
    let t0 = Instant::now();
    let run = randutv_ab_traced(&a, &cfg, workers)?;
    let tw = t0.elapsed().as_secs_f64();
    let speedup = t1 / tw;
    let conc = max_concurrency(&run.events);
    let pass = speedup >= 1.3 && conc >= 2;
    let note = if cores < workers {
        format!("; only {cores} logical core(s) available, the criterion assumes at least {workers}")
    } else {
        String::new()
    };
    Ok(Check::new(
        9,
        "scalability smoke",
        pass,
        format!(
            "{n}x{n} b={b} q={q}: 1 worker {t1:.2}s, {workers} workers {tw:.2}s, speedup {speedup:.2} (need 1.3); \
             peak concurrent tasks {conc} (need 2){note}"
        ),
    ))
}

/// Bench rows carry `scaled = seconds / n^3 * 1e10` exactly, also after a
/// CSV round trip, and the reference timing converts as expected.
pub fn scaled_time_arithmetic(plan: &BenchPlan) -> Result<Check> {
    let rows = run_bench(plan)?;
    let in_memory = rows.iter().all(|r| r.scaled.to_bits() == scaled_time(r.seconds, r.n).to_bits());
    let parsed = parse_bench_csv(&bench_csv(&rows)).map_err(randutv::Error::Format)?;
    let on_disk = parsed.len() == rows.len()
        && parsed.iter().all(|&(n, s, sc)| sc.to_bits() == scaled_time(s, n).to_bits());
    let reference = scaled_time(216.7, 25600);
    let ref_ok = format!("{reference:.3}") == "0.129";
    Ok(Check::new(
        10,
        "scaled-time arithmetic",
        in_memory && on_disk && ref_ok,
        format!(
            "{} bench rows exact in memory: {in_memory}, after CSV: {on_disk}; 216.7 s at n=25600 -> {reference:.4}",
            rows.len()
        ),
    ))
}
