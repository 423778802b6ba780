//! Benchmark CLI for the forkline runtime. Sweeps a benchmark over a
//! list of worker counts and emits one CSV row per (benchmark, threads)
//! cell, plus a trailing comment row with the fitted memory power law
//! when the sweep supports one.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use forkline::bench::{run_bench, uts::UtsParams, BenchParams, BenchSpec, TopologySpec};
use forkline::sched::SchedulerKind;

#[derive(Parser)]
#[command(name = "forkline", version, about = "fork-join runtime benchmark harness")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one benchmark across a sweep of worker counts.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Name {
    Fib,
    Integrate,
    Matmul,
    Nqueens,
    Uts,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchedArg {
    Busy,
    Lazy,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum ShapeArg {
    Geometric,
    Binomial,
}

#[derive(Args)]
struct BenchArgs {
    /// Benchmark to run.
    #[arg(long, value_enum)]
    name: Name,

    /// Problem size: fib argument, matrix dimension, or board size.
    #[arg(long)]
    n: Option<u64>,

    /// Comma-separated worker counts to sweep.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    threads: Vec<usize>,

    /// Scheduling loop variant.
    #[arg(long, value_enum, default_value_t = SchedArg::Busy)]
    sched: SchedArg,

    /// Timed repetitions per cell.
    #[arg(long, default_value_t = 5)]
    reps: usize,

    /// Seed for victim selection and benchmark shapes.
    #[arg(long, default_value_t = 42)]
    seed: u64,

    /// Worker topology: `flat` or `two-level:<nodes>x<cores>`.
    /// A two-level shape applies to the matching thread count; other
    /// counts in the sweep fall back to flat.
    #[arg(long, default_value = "flat", value_parser = parse_topology)]
    topology: TopologySpec,

    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,

    /// Output file; stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Integration interval start.
    #[arg(long, default_value_t = 0.0)]
    lo: f64,

    /// Integration interval end.
    #[arg(long, default_value_t = 1e4)]
    hi: f64,

    /// Integration refinement tolerance.
    #[arg(long, default_value_t = 1e-9)]
    eps: f64,

    /// Tree shape for uts.
    #[arg(long, value_enum, default_value_t = ShapeArg::Geometric)]
    shape: ShapeArg,

    /// Depth cutoff for geometric uts.
    #[arg(long, default_value_t = 8)]
    depth: u32,

    /// Mean branching factor for geometric uts.
    #[arg(long, default_value_t = 4.0)]
    branch: f64,

    /// Child probability for binomial uts.
    #[arg(long, default_value_t = 0.000_495)]
    q: f64,

    /// Children per expanding node for binomial uts.
    #[arg(long, default_value_t = 2000)]
    m: u32,
}

fn parse_topology(s: &str) -> Result<TopologySpec, String> {
    if s == "flat" {
        return Ok(TopologySpec::Flat);
    }
    let shape = s
        .strip_prefix("two-level:")
        .ok_or_else(|| format!("expected `flat` or `two-level:<nodes>x<cores>`, got `{s}`"))?;
    let (nodes, cores) = shape
        .split_once('x')
        .ok_or_else(|| format!("expected `<nodes>x<cores>`, got `{shape}`"))?;
    let nodes: usize = nodes.parse().map_err(|e| format!("bad node count: {e}"))?;
    let cores: usize = cores.parse().map_err(|e| format!("bad core count: {e}"))?;
    if nodes == 0 || cores == 0 {
        return Err("topology dimensions must be positive".into());
    }
    Ok(TopologySpec::TwoLevel { nodes, cores })
}

fn build_params(args: &BenchArgs) -> Result<BenchParams, String> {
    Ok(match args.name {
        Name::Fib => BenchParams::Fib {
            n: args.n.unwrap_or(34),
        },
        Name::Integrate => {
            if !(args.lo < args.hi) {
                return Err("integration interval must satisfy lo < hi".into());
            }
            if !(args.eps > 0.0) {
                return Err("tolerance must be positive".into());
            }
            BenchParams::Integrate {
                lo: args.lo,
                hi: args.hi,
                eps: args.eps,
            }
        }
        Name::Matmul => {
            let n = args.n.unwrap_or(1024) as usize;
            if !n.is_power_of_two() {
                return Err(format!("matrix dimension must be a power of two, got {n}"));
            }
            BenchParams::Matmul { n }
        }
        Name::Nqueens => {
            let n = args.n.unwrap_or(12) as u32;
            if !(1..=16).contains(&n) {
                return Err(format!("board size must be in 1..=16, got {n}"));
            }
            BenchParams::Nqueens { n }
        }
        Name::Uts => BenchParams::Uts(match args.shape {
            ShapeArg::Geometric => {
                if !(args.branch > 0.0) {
                    return Err("branching factor must be positive".into());
                }
                UtsParams::geometric(args.depth, args.branch, args.seed)
            }
            ShapeArg::Binomial => {
                if !(0.0..=1.0).contains(&args.q) || args.q * args.m as f64 >= 1.0 {
                    return Err(format!(
                        "binomial shape needs 0 <= q <= 1 and q*m < 1, got q={} m={}",
                        args.q, args.m
                    ));
                }
                UtsParams::binomial(args.q, args.m, args.seed)
            }
        }),
    })
}

fn run(args: &BenchArgs) -> Result<(), String> {
    if args.threads.is_empty() || args.threads.contains(&0) {
        return Err("thread counts must be positive".into());
    }
    if args.reps == 0 {
        return Err("need at least one repetition".into());
    }
    let spec = BenchSpec {
        params: build_params(args)?,
        threads: args.threads.clone(),
        sched: match args.sched {
            SchedArg::Busy => SchedulerKind::Busy,
            SchedArg::Lazy => SchedulerKind::Lazy,
        },
        reps: args.reps,
        seed: args.seed,
        topology: args.topology,
    };
    let result = run_bench(&spec);
    let Format::Csv = args.format;
    let csv = result.to_csv();
    match &args.out {
        Some(path) => std::fs::write(path, csv)
            .map_err(|e| format!("writing {}: {e}", path.display()))?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Cmd::Bench(args) = cli.cmd;
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
