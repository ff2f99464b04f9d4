//! Command-line front end for the randutv kit.
//!
//! All logic lives here so integration tests can drive [`run`] directly;
//! `main.rs` only maps the outcome to an exit code.

pub mod bench;
pub mod checks;

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use randutv::block_cyclic::{distribution_report, ownership_map, GridSpec};
use randutv::io::{read_matrix, write_csv, write_rutv};
use randutv::metrics::{block_boundaries, make_test_matrix, quality_report, Norm, TestMatrix};
use randutv::scheduler::{export_trace, max_concurrency};
use randutv::{randutv, Matrix, UtvConfig, UtvResult};

use crate::bench::{bench_csv, run_bench, BenchPlan};
use crate::checks::Check;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Algo {
    /// Sequential blocked reference.
    Blocked,
    /// Algorithm-by-blocks on the task scheduler.
    Ab,
}

impl Algo {
    pub fn default_b(self) -> usize {
        match self {
            Algo::Blocked => 128,
            Algo::Ab => 256,
        }
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algo::Blocked => "blocked",
            Algo::Ab => "ab",
        })
    }
}

/// Dispatch to the chosen algorithm. `workers` only matters for `Ab`.
pub fn factorize_with(a: &Matrix, algo: Algo, cfg: &UtvConfig, workers: usize) -> randutv::Result<UtvResult> {
    match algo {
        Algo::Blocked => randutv(a, cfg),
        Algo::Ab => randutv::randutv_ab(a, cfg, workers),
    }
}

#[derive(Debug, Parser)]
#[command(name = "randutv", version, about = "Randomized rank-revealing UTV factorizations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct FactorOpts {
    /// Block size [default: 128 for blocked, 256 for ab]
    #[arg(long)]
    pub b: Option<usize>,
    /// Power iteration steps
    #[arg(long, default_value_t = 1)]
    pub q: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Skip accumulating U and V
    #[arg(long)]
    pub no_uv: bool,
}

impl FactorOpts {
    fn config(&self, algo: Algo) -> UtvConfig {
        let cfg = UtvConfig::new(self.b.unwrap_or(algo.default_b()), self.q, self.seed);
        if self.no_uv {
            cfg.without_uv()
        } else {
            cfg
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Factorize a matrix file (RUTV binary or CSV) and write T, U, V
    Factorize {
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Algo::Blocked)]
        algo: Algo,
        #[command(flatten)]
        opts: FactorOpts,
        /// Worker threads for --algo ab [default: logical cores]
        #[arg(long, env = "RANDUTV_WORKERS")]
        workers: Option<usize>,
        /// Reduce tall inputs to their R factor first
        #[arg(long)]
        qr_first: bool,
        /// Output prefix; writes PREFIX.T.rutv (and PREFIX.U.rutv, PREFIX.V.rutv)
        #[arg(long)]
        out: PathBuf,
        /// Also write a quality report (k,err_utv,err_opt,ratio,diag_relerr) at block boundaries
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Also write the execution trace (ab only)
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Time factorizations of Gaussian n x n matrices
    Bench {
        #[arg(long, value_delimiter = ',', default_values_t = [256usize, 512])]
        sizes: Vec<usize>,
        #[arg(long, value_enum, value_delimiter = ',', default_values_t = [Algo::Blocked])]
        algo: Vec<Algo>,
        /// Block sizes [default: per-algorithm default]
        #[arg(long, value_delimiter = ',')]
        b: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = [1usize])]
        q: Vec<usize>,
        /// Worker counts for ab [default: logical cores]
        #[arg(long, value_delimiter = ',', env = "RANDUTV_WORKERS")]
        workers: Vec<usize>,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        no_uv: bool,
        /// Write rows here instead of stdout
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Run the self-check suite; exit status 1 if any check fails
    Verify {
        #[arg(value_enum, default_value_t = Level::Fast)]
        level: Level,
    },
    /// Run the algorithm-by-blocks on a Gaussian matrix and write its trace
    Trace {
        #[arg(long, default_value_t = 512)]
        n: usize,
        #[command(flatten)]
        opts: FactorOpts,
        #[arg(long, env = "RANDUTV_WORKERS")]
        workers: Option<usize>,
        /// Trace file (task_index,kind,worker,start_ns,end_ns)
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the block-cyclic ownership map of an m x n matrix
    Layout {
        #[arg(long, default_value_t = 16)]
        m: usize,
        #[arg(long, default_value_t = 24)]
        n: usize,
        #[arg(long, default_value_t = 4)]
        mb: usize,
        #[arg(long, default_value_t = 4)]
        nb: usize,
        /// Process grid rows
        #[arg(long, default_value_t = 2)]
        p: usize,
        /// Process grid columns
        #[arg(long, default_value_t = 3)]
        q: usize,
    },
    /// Write a test matrix (gaussian, identity, geometric:BETA, rank:R)
    Mkmat {
        kind: TestMatrix,
        #[arg(long)]
        m: usize,
        /// Columns [default: m]
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output path; `.csv` selects CSV, anything else the RUTV format
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Level {
    /// Small configurations, well under a minute
    Fast,
    /// Every check at full size, including the statistical and timing ones
    Full,
}

/// Failure modes, mapped to process exit codes by [`CliError::exit_code`].
#[derive(Debug)]
pub enum CliError {
    /// One or more self-checks failed.
    Verify(usize),
    /// Bad arguments, unreadable input, or a library error.
    Usage(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Verify(_) => 1,
            CliError::Usage(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Verify(n) => write!(f, "{n} check(s) failed"),
            CliError::Usage(m) => f.write_str(m),
        }
    }
}

impl From<randutv::Error> for CliError {
    fn from(e: randutv::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

fn default_workers(w: Option<usize>) -> usize {
    w.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |c| c.get()))
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Factorize {
            input,
            algo,
            opts,
            workers,
            qr_first,
            out: prefix,
            csv,
            trace,
        } => {
            if trace.is_some() && algo != Algo::Ab {
                return Err(CliError::Usage("--trace requires --algo ab".into()));
            }
            if csv.is_some() && opts.no_uv {
                return Err(CliError::Usage("--csv needs U and V; drop --no-uv".into()));
            }
            let a = read_matrix(&input)
                .map_err(|e| CliError::Usage(format!("{}: {e}", input.display())))?;
            let mut cfg = opts.config(algo);
            cfg.qr_first = qr_first;
            let workers = default_workers(workers);
            let res = match algo {
                Algo::Blocked => randutv(&a, &cfg)?,
                Algo::Ab => {
                    let run = randutv::ab::randutv_ab_traced(&a, &cfg, workers)?;
                    if let Some(path) = &trace {
                        export_trace(&run.graph, &run.events, path)?;
                    }
                    run.result
                }
            };
            let t_path = with_suffix(&prefix, ".T.rutv");
            write_rutv(&res.t, &t_path)?;
            writeln!(out, "wrote {}", t_path.display())?;
            for (name, m) in [("U", &res.u), ("V", &res.v)] {
                if let Some(m) = m {
                    let p = with_suffix(&prefix, &format!(".{name}.rutv"));
                    write_rutv(m, &p)?;
                    writeln!(out, "wrote {}", p.display())?;
                }
            }
            if let Some(path) = csv {
                let (m, n) = a.shape();
                let ks = block_boundaries(m, n, cfg.b);
                if ks.is_empty() {
                    return Err(CliError::Usage(format!("--csv: no block boundary below min(m,n) for b={}", cfg.b)));
                }
                let report = quality_report(&a, &res, &ks, Norm::Frobenius)?;
                std::fs::write(&path, report.to_csv())?;
                writeln!(out, "wrote {}", path.display())?;
            }
            Ok(())
        }
        Command::Bench {
            sizes,
            algo,
            b,
            q,
            workers,
            repeats,
            seed,
            no_uv,
            csv,
        } => {
            let workers = if workers.is_empty() { vec![default_workers(None)] } else { workers };
            let plan = BenchPlan {
                algos: algo,
                sizes,
                bs: b,
                qs: q,
                workers,
                repeats,
                build_uv: !no_uv,
                seed,
            };
            let text = bench_csv(&run_bench(&plan)?);
            match csv {
                Some(path) => {
                    std::fs::write(&path, &text)?;
                    writeln!(out, "wrote {}", path.display())?;
                }
                None => out.write_all(text.as_bytes())?,
            }
            Ok(())
        }
        Command::Verify { level } => {
            let failed = verify(level, out)?;
            if failed > 0 {
                Err(CliError::Verify(failed))
            } else {
                Ok(())
            }
        }
        Command::Trace {
            n,
            opts,
            workers,
            out: path,
        } => {
            let a = make_test_matrix(TestMatrix::Gaussian, n, n, opts.seed)?;
            let cfg = opts.config(Algo::Ab);
            let run = randutv::ab::randutv_ab_traced(&a, &cfg, default_workers(workers))?;
            export_trace(&run.graph, &run.events, &path)?;
            writeln!(
                out,
                "wrote {} ({} tasks, peak {} concurrent)",
                path.display(),
                run.events.len(),
                max_concurrency(&run.events)
            )?;
            Ok(())
        }
        Command::Layout { m, n, mb, nb, p, q } => {
            let spec = GridSpec::new(mb, nb, p, q)?;
            out.write_all(ownership_map(&spec, m, n).as_bytes())?;
            for (proc_id, count) in distribution_report(&spec, m, n).iter().enumerate() {
                writeln!(out, "process {proc_id}: {count} elements")?;
            }
            Ok(())
        }
        Command::Mkmat { kind, m, n, seed, out: path } => {
            let a = make_test_matrix(kind, m, n.unwrap_or(m), seed)?;
            if path.extension().is_some_and(|e| e == "csv") {
                write_csv(&a, &path)?;
            } else {
                write_rutv(&a, &path)?;
            }
            writeln!(out, "wrote {} ({kind}, {}x{})", path.display(), a.rows(), a.cols())?;
            Ok(())
        }
    }
}

/// Run the self-check suite, printing one line per check. Returns the number
/// of failed checks.
pub fn verify(level: Level, out: &mut dyn Write) -> Result<usize, CliError> {
    let full = level == Level::Full;
    let mut failed = 0;
    let mut report = |c: Check, out: &mut dyn Write| -> Result<(), CliError> {
        failed += usize::from(!c.pass);
        writeln!(out, "{c}")?;
        Ok(())
    };
    let (valid, spec) = checks::validity_and_spectrum(&[8, 16], &[0, 1, 2], 4)?;
    report(valid, out)?;
    report(spec, out)?;
    report(checks::analyzer_transcript()?, out)?;
    let (seeds, workers): (&[u64], &[usize]) = if full { (&[0, 1, 2, 3, 4], &[1, 2, 4, 8]) } else { (&[0], &[1, 2, 4]) };
    report(checks::schedule_determinism(192, 32, 1, seeds, workers)?, out)?;
    report(checks::dag_fuzz(if full { 1000 } else { 200 }, 200, 42)?, out)?;
    report(checks::td_qr_oracle(100, 9)?, out)?;
    if full {
        let seeds: Vec<u64> = (0..20).collect();
        let study = checks::quality_study(200, 20, 2024, &seeds, &[0, 2])?;
        report(study.check(0, 2, 1.5), out)?;
        writeln!(out, "  note: {}", study.resolvable_summary(0, 2))?;
    }
    report(checks::block_cyclic_example()?, out)?;
    if full {
        report(checks::scalability(1536, 256, 1, 4, 1)?, out)?;
    }
    let plan = BenchPlan {
        algos: vec![Algo::Blocked, Algo::Ab],
        sizes: vec![64, 128],
        bs: vec![32],
        qs: vec![1],
        workers: vec![2],
        repeats: 2,
        build_uv: true,
        seed: 0,
    };
    report(checks::scaled_time_arithmetic(&plan)?, out)?;
    Ok(failed)
}
