//! Timing sweeps over (n, b, q, workers) with the scaled-time convention.

use std::fmt::Write as _;
use std::time::Instant;

use randutv::metrics::{make_test_matrix, scaled_time, TestMatrix};
use randutv::{Result, UtvConfig};

use crate::{factorize_with, Algo};

/// One timed run.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub algo: Algo,
    pub n: usize,
    pub b: usize,
    pub q: usize,
    pub workers: usize,
    pub build_uv: bool,
    pub repeat: usize,
    pub seconds: f64,
    /// Always `scaled_time(seconds, n)`.
    pub scaled: f64,
    /// Set on the median-time repeat of each configuration.
    pub median: bool,
}

pub const CSV_HEADER: &str = "algo,n,b,q,workers,build_uv,repeat,seconds,scaled,median";

#[derive(Clone, Debug)]
pub struct BenchPlan {
    pub algos: Vec<Algo>,
    pub sizes: Vec<usize>,
    /// Empty means "the default block size of each algorithm".
    pub bs: Vec<usize>,
    pub qs: Vec<usize>,
    pub workers: Vec<usize>,
    pub repeats: usize,
    pub build_uv: bool,
    pub seed: u64,
}

/// Run every configuration `repeats` times on a Gaussian `n x n` input.
///
/// The blocked algorithm is sequential, so it is timed once per (n, b, q)
/// with `workers = 1` regardless of the requested worker list.
pub fn run_bench(plan: &BenchPlan) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::new();
    for &algo in &plan.algos {
        let bs = if plan.bs.is_empty() { vec![algo.default_b()] } else { plan.bs.clone() };
        let workers = match algo {
            Algo::Blocked => vec![1],
            Algo::Ab => plan.workers.clone(),
        };
        for &n in &plan.sizes {
            let a = make_test_matrix(TestMatrix::Gaussian, n, n, plan.seed)?;
            for &b in &bs {
                for &q in &plan.qs {
                    for &w in &workers {
                        let mut cfg = UtvConfig::new(b, q, plan.seed);
                        if !plan.build_uv {
                            cfg = cfg.without_uv();
                        }
                        let first = rows.len();
                        for repeat in 0..plan.repeats {
                            let start = Instant::now();
                            factorize_with(&a, algo, &cfg, w)?;
                            let seconds = start.elapsed().as_secs_f64();
                            rows.push(BenchRow {
                                algo,
                                n,
                                b,
                                q,
                                workers: w,
                                build_uv: plan.build_uv,
                                repeat,
                                seconds,
                                scaled: scaled_time(seconds, n),
                                median: false,
                            });
                        }
                        flag_median(&mut rows[first..]);
                    }
                }
            }
        }
    }
    Ok(rows)
}

fn flag_median(group: &mut [BenchRow]) {
    if group.is_empty() {
        return;
    }
    let mut idx: Vec<usize> = (0..group.len()).collect();
    idx.sort_by(|&x, &y| group[x].seconds.total_cmp(&group[y].seconds));
    group[idx[(idx.len() - 1) / 2]].median = true;
}

/// Render rows as CSV. Floats use Rust's shortest round-trip formatting, so
/// parsing the file back yields the exact values.
pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            r.algo,
            r.n,
            r.b,
            r.q,
            r.workers,
            r.build_uv as u8,
            r.repeat,
            r.seconds,
            r.scaled,
            r.median as u8
        );
    }
    s
}

/// Parse the `(n, seconds, scaled)` columns back out of a bench CSV.
pub fn parse_bench_csv(text: &str) -> std::result::Result<Vec<(usize, f64, f64)>, String> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err("unexpected header".into());
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 10 {
                return Err(format!("expected 10 fields, got {}: {l}", f.len()));
            }
            let n = f[1].parse().map_err(|e| format!("n: {e}"))?;
            let sec = f[7].parse().map_err(|e| format!("seconds: {e}"))?;
            let sc = f[8].parse().map_err(|e| format!("scaled: {e}"))?;
            Ok((n, sec, sc))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plan() -> BenchPlan {
        BenchPlan {
            algos: vec![Algo::Blocked, Algo::Ab],
            sizes: vec![32],
            bs: vec![8, 16],
            qs: vec![0, 1],
            workers: vec![1, 2],
            repeats: 3,
            build_uv: false,
            seed: 3,
        }
    }

    #[test]
    fn one_row_per_configuration_and_repeat() {
        let rows = run_bench(&plan()).unwrap();
        // blocked: 2 b x 2 q x 1 worker; ab: 2 b x 2 q x 2 workers; 3 repeats each
        assert_eq!(rows.len(), (4 + 8) * 3);
        assert_eq!(rows.iter().filter(|r| r.median).count(), 12);
        for r in &rows {
            assert_eq!(r.scaled.to_bits(), scaled_time(r.seconds, r.n).to_bits());
        }
    }

    #[test]
    fn csv_round_trips_exactly() {
        let rows = run_bench(&BenchPlan { repeats: 1, ..plan() }).unwrap();
        let parsed = parse_bench_csv(&bench_csv(&rows)).unwrap();
        for (r, (n, s, sc)) in rows.iter().zip(parsed) {
            assert_eq!(n, r.n);
            assert_eq!(s.to_bits(), r.seconds.to_bits());
            assert_eq!(sc.to_bits(), r.scaled.to_bits());
        }
    }

    #[test]
    fn median_is_the_middle_time() {
        let mk = |s| BenchRow {
            algo: Algo::Blocked,
            n: 1,
            b: 1,
            q: 0,
            workers: 1,
            build_uv: true,
            repeat: 0,
            seconds: s,
            scaled: 0.0,
            median: false,
        };
        let mut g = vec![mk(3.0), mk(1.0), mk(2.0)];
        flag_median(&mut g);
        assert!(g[2].median && !g[0].median && !g[1].median);
        let mut g = vec![mk(3.0), mk(1.0), mk(2.0), mk(4.0)];
        flag_median(&mut g);
        assert!(g[2].median);
    }
}
