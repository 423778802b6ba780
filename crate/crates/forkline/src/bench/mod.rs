//! Benchmark harness: specs, serial oracles, timing sweeps, and CSV
//! emission. Every parallel run is checked against its serial oracle
//! before its timing is reported; a mismatch aborts the sweep because a
//! wrong fast answer is worthless.
//!
//! Methodology: each repetition re-runs the workload until at least
//! 100 ms have elapsed and reports the normalized per-run time; rows
//! carry the median and standard deviation over repetitions. Pools are
//! constructed per (benchmark, threads, scheduler) cell and never shared.

pub mod fib;
pub mod integrate;
pub mod matmul;
pub mod nqueens;
pub mod uts;

use std::time::{Duration, Instant};

use crate::metrics::{fit_power_law, PowerLawFit};
use crate::rng::mix64;
use crate::sched::{Pool, PoolConfig, SchedulerKind};
use crate::topo::NumaTopology;

use self::uts::{UtsParams, UtsShape};

/// Minimum measured wall time per repetition before normalizing.
pub const MIN_REP_TIME: Duration = Duration::from_millis(100);

#[derive(Debug, Clone, Copy)]
pub enum BenchParams {
    Fib { n: u64 },
    Integrate { lo: f64, hi: f64, eps: f64 },
    Matmul { n: usize },
    Nqueens { n: u32 },
    Uts(UtsParams),
}

impl BenchParams {
    pub fn name(&self) -> &'static str {
        match self {
            BenchParams::Fib { .. } => "fib",
            BenchParams::Integrate { .. } => "integrate",
            BenchParams::Matmul { .. } => "matmul",
            BenchParams::Nqueens { .. } => "nqueens",
            BenchParams::Uts(_) => "uts",
        }
    }

    /// Self-describing parameter field: `key=value` pairs joined with `;`
    /// (no commas, so the CSV stays single-delimiter).
    pub fn describe(&self) -> String {
        match *self {
            BenchParams::Fib { n } => format!("n={n}"),
            BenchParams::Integrate { lo, hi, eps } => {
                format!("lo={lo};hi={hi};eps={eps}")
            }
            BenchParams::Matmul { n } => format!("n={n}"),
            BenchParams::Nqueens { n } => format!("n={n}"),
            BenchParams::Uts(p) => match p.shape {
                UtsShape::Geometric => format!(
                    "shape=geometric;d={};b={};r={};sampling=floor(ln(u)/ln(1-p)) with p=1/(b+1)",
                    p.d, p.b, p.r
                ),
                UtsShape::Binomial => format!(
                    "shape=binomial;q={};m={};r={};root_children={}",
                    p.q,
                    p.m,
                    p.r,
                    uts::BINOMIAL_ROOT_CHILDREN
                ),
            },
        }
    }
}

/// Synthetic topology selector; applied to each pool size it fits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TopologySpec {
    Flat,
    TwoLevel { nodes: usize, cores: usize },
}

impl TopologySpec {
    /// Topology for a `threads`-wide pool. A two-level request that does
    /// not match the thread count falls back to flat.
    pub fn build(&self, threads: usize) -> NumaTopology {
        match *self {
            TopologySpec::TwoLevel { nodes, cores } if nodes * cores == threads => {
                NumaTopology::two_level(nodes, cores)
            }
            _ => NumaTopology::flat(threads),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchSpec {
    pub params: BenchParams,
    pub threads: Vec<usize>,
    pub sched: SchedulerKind,
    pub reps: usize,
    pub seed: u64,
    pub topology: TopologySpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub benchmark: String,
    pub params: String,
    pub scheduler: String,
    pub threads: usize,
    pub reps: usize,
    pub median_ns: u64,
    pub stddev_ns: u64,
    pub peak_frame_bytes: usize,
    pub result_hash: u64,
}

pub const CSV_HEADER: &str =
    "benchmark,params,scheduler,threads,reps,median_ns,stddev_ns,peak_frame_bytes,result_hash";

impl BenchRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{:016x}",
            self.benchmark,
            self.params,
            self.scheduler,
            self.threads,
            self.reps,
            self.median_ns,
            self.stddev_ns,
            self.peak_frame_bytes,
            self.result_hash
        )
    }

    pub fn from_csv(line: &str) -> Option<BenchRow> {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 9 {
            return None;
        }
        Some(BenchRow {
            benchmark: f[0].to_string(),
            params: f[1].to_string(),
            scheduler: f[2].to_string(),
            threads: f[3].parse().ok()?,
            reps: f[4].parse().ok()?,
            median_ns: f[5].parse().ok()?,
            stddev_ns: f[6].parse().ok()?,
            peak_frame_bytes: f[7].parse().ok()?,
            result_hash: u64::from_str_radix(f[8], 16).ok()?,
        })
    }
}

#[derive(Debug, Clone)]
pub struct BenchResult {
    pub rows: Vec<BenchRow>,
    pub fit: Option<PowerLawFit>,
}

impl BenchResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.to_csv());
            out.push('\n');
        }
        if let Some(fit) = &self.fit {
            out.push_str(&format!(
                "# fit a={} b={} n={} stderr={}\n",
                fit.a, fit.b, fit.n, fit.n_stderr
            ));
        }
        out
    }
}

fn hash_u64(x: u64) -> u64 {
    mix64(x ^ 0x5157_5321)
}

fn hash_f64(x: f64) -> u64 {
    hash_u64(x.to_bits())
}

fn hash_f64s(xs: &[f64]) -> u64 {
    xs.iter().fold(0u64, |acc, &x| mix64(acc ^ x.to_bits()))
}

/// Scratch buffers a benchmark needs across iterations.
enum Workload {
    Plain,
    Matrices { a: Vec<f64>, b: Vec<f64>, c: Vec<f64> },
}

fn prepare(params: &BenchParams, seed: u64) -> Workload {
    match *params {
        BenchParams::Matmul { n } => Workload::Matrices {
            a: matmul::random_matrix(n, seed ^ 1),
            b: matmul::random_matrix(n, seed ^ 2),
            c: vec![0.0; n * n],
        },
        _ => Workload::Plain,
    }
}

fn run_once_parallel(params: &BenchParams, pool: &Pool, work: &mut Workload) -> u64 {
    match *params {
        BenchParams::Fib { n } => hash_u64(pool.run(fib::Fib::new(n))),
        BenchParams::Integrate { lo, hi, eps } => {
            hash_f64(pool.run(integrate::Integrate::new(lo, hi, eps)))
        }
        BenchParams::Matmul { n } => {
            let Workload::Matrices { a, b, c } = work else {
                unreachable!()
            };
            pool.run(matmul::MatMul::new(a.as_ptr(), b.as_ptr(), c.as_mut_ptr(), n));
            hash_f64s(c)
        }
        BenchParams::Nqueens { n } => hash_u64(pool.run(nqueens::NQueens::new(n))),
        BenchParams::Uts(p) => hash_u64(pool.run(uts::Uts::new(p))),
    }
}

fn run_once_serial(params: &BenchParams, work: &mut Workload) -> u64 {
    match *params {
        BenchParams::Fib { n } => hash_u64(fib::fib_serial(n)),
        BenchParams::Integrate { lo, hi, eps } => {
            hash_f64(integrate::integrate_serial(lo, hi, eps))
        }
        BenchParams::Matmul { n } => {
            let Workload::Matrices { a, b, c } = work else {
                unreachable!()
            };
            matmul::matmul_serial(a, b, c, n);
            hash_f64s(c)
        }
        BenchParams::Nqueens { n } => hash_u64(nqueens::nqueens_serial(n)),
        BenchParams::Uts(p) => hash_u64(uts::uts_serial(p)),
    }
}

/// Repeat `f` until [`MIN_REP_TIME`] elapses; returns (ns per run, hash).
fn timed_rep(mut f: impl FnMut() -> u64) -> (u64, u64) {
    let start = Instant::now();
    let mut iters = 0u128;
    loop {
        let hash = f();
        iters += 1;
        let elapsed = start.elapsed();
        if elapsed >= MIN_REP_TIME {
            return ((elapsed.as_nanos() / iters) as u64, hash);
        }
    }
}

fn median_and_stddev(samples: &mut [u64]) -> (u64, u64) {
    samples.sort_unstable();
    let n = samples.len();
    let median = if n % 2 == 1 {
        samples[n / 2]
    } else {
        (samples[n / 2 - 1] + samples[n / 2]) / 2
    };
    let mean = samples.iter().map(|&x| x as f64).sum::<f64>() / n as f64;
    let var = samples
        .iter()
        .map(|&x| {
            let d = x as f64 - mean;
            d * d
        })
        .sum::<f64>()
        / n as f64;
    (median, var.sqrt() as u64)
}

/// Serial-projection timing and result hash for `params`.
pub fn serial_baseline(params: &BenchParams, seed: u64) -> (u64, u64) {
    let mut work = prepare(params, seed);
    timed_rep(|| run_once_serial(params, &mut work))
}

/// Full timing/memory sweep over the requested thread counts. Panics if any
/// parallel run disagrees with the serial oracle.
pub fn run_bench(spec: &BenchSpec) -> BenchResult {
    assert!(spec.reps >= 1, "need at least one repetition");
    let mut oracle_work = prepare(&spec.params, spec.seed);
    let oracle_hash = run_once_serial(&spec.params, &mut oracle_work);
    let exact = !matches!(spec.params, BenchParams::Matmul { .. });

    let mut rows = Vec::new();
    let mut mem_points = Vec::new();
    for &p in &spec.threads {
        let pool = Pool::with_config(PoolConfig {
            threads: p,
            kind: spec.sched,
            topology: Some(spec.topology.build(p)),
            seed: spec.seed,
        });
        let mut work = prepare(&spec.params, spec.seed);
        let mut samples = Vec::with_capacity(spec.reps);
        let mut hash = 0u64;
        for _ in 0..spec.reps {
            let (ns, h) = timed_rep(|| run_once_parallel(&spec.params, &pool, &mut work));
            samples.push(ns);
            hash = h;
        }
        if exact {
            assert_eq!(
                hash,
                oracle_hash,
                "{} diverged from its serial oracle at P={p}",
                spec.params.name()
            );
        } else if let (
            Workload::Matrices { c, .. },
            Workload::Matrices { c: want, .. },
        ) = (&work, &oracle_work)
        {
            let n = match spec.params {
                BenchParams::Matmul { n } => n,
                _ => unreachable!(),
            };
            let dev = matmul::max_abs_diff(c, want);
            assert!(
                dev <= 1e-8 * n as f64,
                "matmul deviation {dev} beyond tolerance at P={p}"
            );
        }
        let (median_ns, stddev_ns) = median_and_stddev(&mut samples);
        let peak = pool.peak_frame_bytes();
        rows.push(BenchRow {
            benchmark: spec.params.name().to_string(),
            params: spec.params.describe(),
            scheduler: match spec.sched {
                SchedulerKind::Busy => "busy".to_string(),
                SchedulerKind::Lazy => "lazy".to_string(),
            },
            threads: p,
            reps: spec.reps,
            median_ns,
            stddev_ns,
            peak_frame_bytes: peak,
            result_hash: hash,
        });
        mem_points.push((p, peak));
        pool.shutdown();
    }

    let fit = power_fit_from_rows(&mem_points);
    BenchResult { rows, fit }
}

/// Memory fit over (threads, peak) sweep points, if the sweep includes a
/// single-worker baseline and enough spread to be identifiable.
pub fn power_fit_from_rows(points: &[(usize, usize)]) -> Option<PowerLawFit> {
    let m1 = points.iter().find(|&&(p, _)| p == 1)?.1;
    let mut distinct: Vec<usize> = points.iter().map(|&(p, _)| p).collect();
    distinct.sort_unstable();
    distinct.dedup();
    if points.len() < 4 || distinct.len() < 3 {
        return None;
    }
    let triples: Vec<(usize, usize, usize)> =
        points.iter().map(|&(p, mp)| (p, m1, mp)).collect();
    Some(fit_power_law(&triples))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_rows_round_trip() {
        let row = BenchRow {
            benchmark: "fib".into(),
            params: "n=20".into(),
            scheduler: "lazy".into(),
            threads: 4,
            reps: 5,
            median_ns: 123456,
            stddev_ns: 789,
            peak_frame_bytes: 65536,
            result_hash: 0xdeadbeef,
        };
        let parsed = BenchRow::from_csv(&row.to_csv()).unwrap();
        assert_eq!(parsed, row);
    }

    #[test]
    fn header_matches_schema_order() {
        assert_eq!(
            CSV_HEADER,
            "benchmark,params,scheduler,threads,reps,median_ns,stddev_ns,peak_frame_bytes,result_hash"
        );
    }

    #[test]
    fn params_fields_avoid_commas() {
        let specs = [
            BenchParams::Fib { n: 34 },
            BenchParams::Integrate {
                lo: 0.0,
                hi: 1e4,
                eps: 1e-9,
            },
            BenchParams::Matmul { n: 1024 },
            BenchParams::Nqueens { n: 12 },
            BenchParams::Uts(UtsParams::geometric(8, 4.0, 42)),
            BenchParams::Uts(UtsParams::binomial(0.12, 8, 42)),
        ];
        for p in specs {
            assert!(!p.describe().contains(','), "{}", p.describe());
        }
    }

    #[test]
    fn small_fib_sweep_produces_consistent_rows() {
        let spec = BenchSpec {
            params: BenchParams::Fib { n: 16 },
            threads: vec![1, 2],
            sched: SchedulerKind::Busy,
            reps: 2,
            seed: 42,
            topology: TopologySpec::Flat,
        };
        let result = run_bench(&spec);
        assert_eq!(result.rows.len(), 2);
        let h0 = result.rows[0].result_hash;
        for row in &result.rows {
            assert_eq!(row.result_hash, h0);
            assert!(row.median_ns > 0);
            assert!(row.peak_frame_bytes > 0);
            assert!(BenchRow::from_csv(&row.to_csv()).is_some());
        }
        // Two thread counts only: not enough spread for a fit.
        assert!(result.fit.is_none());
    }

    #[test]
    fn single_rep_reports_zero_stddev() {
        let spec = BenchSpec {
            params: BenchParams::Nqueens { n: 7 },
            threads: vec![1],
            sched: SchedulerKind::Busy,
            reps: 1,
            seed: 0,
            topology: TopologySpec::Flat,
        };
        let result = run_bench(&spec);
        assert_eq!(result.rows[0].stddev_ns, 0);
    }

    #[test]
    fn fit_pipeline_on_synthetic_memory_points() {
        let points = vec![(1, 1000), (2, 2000), (4, 4000), (8, 8000)];
        let fit = power_fit_from_rows(&points).unwrap();
        assert!((fit.n - 1.0).abs() < 0.05, "{fit:?}");
    }
}
