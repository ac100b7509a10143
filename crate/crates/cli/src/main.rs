//! `maxload`: bounds, thresholds, exact values and simulations for the
//! maximum load of balls thrown into bins.
//!
//! Exit codes: 0 success, 1 self-check failure, 2 parse error, 3 domain error.

mod commands;
mod dist_spec;

use std::io::Write;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use maxload::check::CheckLevel;
use maxload::sim::{SimConfig, DEFAULT_TRIALS};
use maxload::sweep::{SweepRequest, DEFAULT_POINTS, DEFAULT_RHO_MAX};
use serde::Serialize;

use commands::Fault;
use dist_spec::DistSpec;

/// Thread count for simulation and oracle work; unset means one per core.
const THREADS_ENV: &str = "MAXLOAD_THREADS";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Parse(String),
    #[error(transparent)]
    Core(#[from] maxload::Error),
    #[error("write failed: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            Self::Parse(_) => 2,
            Self::Core(_) | Self::Io(_) => 3,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "maxload",
    version,
    about = "Maximum-load bounds for balls into bins"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Level {
    Fast,
    Full,
}

#[derive(Subcommand)]
enum Command {
    /// Two-sided bounds on Pr[max load ≥ k] after m balls.
    Bound {
        dist: String,
        #[arg(long)]
        m: u64,
        #[arg(long)]
        k: u32,
        /// Restrict to these bins (0-based, comma-separated).
        #[arg(long, value_delimiter = ',')]
        subset: Option<Vec<usize>>,
    },
    /// Solve ρ = 1 for the load (given --m) or the ball count (given --k).
    Solve {
        dist: String,
        #[arg(long, conflicts_with = "k", required_unless_present = "k")]
        m: Option<u64>,
        #[arg(long)]
        k: Option<u32>,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
    },
    /// CSV of bounds and simulated frequencies over a ρ grid.
    Sweep {
        dist: String,
        /// Comma-separated loads.
        #[arg(long, value_delimiter = ',', required = true)]
        k: Vec<u32>,
        #[arg(long, default_value_t = DEFAULT_RHO_MAX)]
        rho_max: f64,
        #[arg(long, default_value_t = DEFAULT_POINTS)]
        points: usize,
        #[arg(long, default_value_t = DEFAULT_TRIALS)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Add exact probabilities (small instances only).
        #[arg(long)]
        exact: bool,
    },
    /// Expected waiting time until some bin holds k balls.
    Wait {
        dist: String,
        #[arg(long)]
        k: u32,
        /// Also simulate this many waiting times.
        #[arg(long)]
        trials: Option<u64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Exact Pr[max load ≥ k].
    Oracle {
        dist: String,
        #[arg(long)]
        m: u64,
        #[arg(long)]
        k: u32,
        #[arg(long, value_delimiter = ',')]
        subset: Option<Vec<usize>>,
        /// Enumerate placements instead of using the generating function.
        #[arg(long)]
        enumerate: bool,
    },
    /// Monte Carlo frequency of max load ≥ k, with a Wilson interval.
    Simulate {
        dist: String,
        #[arg(long)]
        m: u64,
        #[arg(long)]
        k: u32,
        #[arg(long, default_value_t = DEFAULT_TRIALS)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.999)]
        confidence: f64,
    },
    /// Run the self-check suites; exits 1 on any failure.
    Check {
        #[arg(long, value_enum, default_value_t = Level::Fast)]
        level: Level,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, hide = true)]
        inject_fault: Option<Fault>,
    },
}

fn emit_json<T: Serialize>(value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("reports serialize");
    let mut out = std::io::stdout().lock();
    writeln!(out, "{text}")?;
    Ok(())
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        CliError::Parse(format!("{THREADS_ENV}=`{raw}` is not a positive integer"))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Parse(format!("cannot configure {n} threads: {e}")))
}

fn run(cmd: Command) -> Result<bool, CliError> {
    match cmd {
        Command::Bound { dist, m, k, subset } => {
            let spec: DistSpec = dist.parse()?;
            emit_json(&commands::bound(&spec, m, k, subset.as_deref())?)?;
        }
        Command::Solve { dist, m, k, delta } => {
            let spec: DistSpec = dist.parse()?;
            let report = match (m, k) {
                (Some(m), _) => commands::solve_for_load(&spec, m, delta)?,
                (None, Some(k)) => commands::solve_for_balls(&spec, k, delta)?,
                (None, None) => unreachable!("clap requires one of --m/--k"),
            };
            emit_json(&report)?;
        }
        Command::Sweep {
            dist,
            k,
            rho_max,
            points,
            trials,
            seed,
            exact,
        } => {
            let spec: DistSpec = dist.parse()?;
            let req = SweepRequest {
                loads: k,
                rho_max,
                points,
                sim: SimConfig::new(trials, seed),
                exact,
            };
            let csv = commands::sweep(&spec, &req)?;
            let mut out = std::io::stdout().lock();
            out.write_all(csv.as_bytes())?;
            out.flush()?;
        }
        Command::Wait {
            dist,
            k,
            trials,
            seed,
        } => {
            let spec: DistSpec = dist.parse()?;
            let sim = trials.map(|t| SimConfig::new(t, seed));
            emit_json(&commands::wait(&spec, k, sim)?)?;
        }
        Command::Oracle {
            dist,
            m,
            k,
            subset,
            enumerate,
        } => {
            let spec: DistSpec = dist.parse()?;
            emit_json(&commands::oracle(
                &spec,
                m,
                k,
                subset.as_deref(),
                enumerate,
            )?)?;
        }
        Command::Simulate {
            dist,
            m,
            k,
            trials,
            seed,
            confidence,
        } => {
            let spec: DistSpec = dist.parse()?;
            let cfg = SimConfig::new(trials, seed);
            emit_json(&commands::simulate(&spec, m, k, &cfg, confidence)?)?;
        }
        Command::Check {
            level,
            seed,
            inject_fault,
        } => {
            let level = match level {
                Level::Fast => CheckLevel::Fast,
                Level::Full => CheckLevel::Full,
            };
            let report = commands::check(level, seed, inject_fault);
            for c in report.criteria.iter().filter(|c| !c.passed) {
                eprintln!("criterion {} ({}) failed: {}", c.id, c.name, c.detail);
            }
            emit_json(&report)?;
            return Ok(report.passed);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = configure_threads().and_then(|()| run(cli.command));
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("maxload: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
