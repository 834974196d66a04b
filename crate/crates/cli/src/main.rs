//! `qmlab` - experiments with joint quasimodes on the flat torus.
//!
//! Each subcommand reads a TOML config (`-c`), writes its CSV or report to
//! `-o` (stdout otherwise), prints one `CHECK ...: PASS|FAIL` line per
//! verification, and exits with 0 (all checks passed), 1 (a mathematical
//! check failed), 2 (usage or config error), or 3 (numerical precondition
//! rejected).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;
mod gridio;
mod report;

use config::RawConfig;

/// Outcome of a command's mathematical checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
}

/// Errors mapped onto exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Usage or configuration problem (exit 2).
    Config(String),
    /// IO failure (exit 2).
    Io(std::io::Error),
    /// Error from the core library (exit 3 for numerical precondition
    /// rejections, 1 for a failed admissibility gate, 2 otherwise).
    Core(qmlab_core::Error),
}

impl CliError {
    pub fn config(message: String) -> Self {
        CliError::Config(message)
    }

    pub fn io(e: std::io::Error) -> Self {
        CliError::Io(e)
    }

    pub fn core(e: qmlab_core::Error) -> Self {
        CliError::Core(e)
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Core(e) => match e {
                qmlab_core::Error::NotAdmissible(_) => 1,
                other if other.is_precondition() => 3,
                _ => 2,
            },
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "{m}"),
            CliError::Io(e) => write!(f, "io error: {e}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

const DELTA_KEYS: &str = "Recognized config keys:\n  \
    command    optional echo of the subcommand\n  \
    n          ambient dimension (>= 2)\n  \
    p          Lebesgue exponent in [2, inf]; a number or \"inf\"\n  \
    r          number of joint operators (1 <= r <= n)";

const ADMISSIBILITY_KEYS: &str = "Recognized config keys:\n  \
    command      optional echo of the subcommand\n  \
    dimension    ambient dimension n\n  \
    symbols      list of symbol strings, p1 first (e.g. \"|xi|^2 - 1\")\n  \
    base_x       base point x0 (length n)\n  \
    base_xi      base point xi0 (length n)\n  \
    tolerances   optional table { grad, indep, curv }";

const REDUCE_KEYS: &str = "Recognized config keys:\n  \
    command      optional echo of the subcommand\n  \
    dimension    ambient dimension n\n  \
    symbols      list of symbol strings, p1 first\n  \
    base_x       base point x0 (length n)\n  \
    base_xi      base point xi0 (length n)\n  \
    tolerances   optional table { grad, indep, curv }";

const DEFECT_KEYS: &str = "Recognized config keys:\n  \
    command        optional echo of the subcommand\n  \
    dimension      ambient dimension n\n  \
    symbols        list of symbol strings\n  \
    kmax           highest total operator power (default 3)\n  \
    grid_headroom  grid sizing factor, N = next power of two >= headroom * lambda (default 8)\n  \
    dump_grid      optional path for the binary grid dump\n  \
    quasimode      table { kind, lambda, width, rank, inner, x_width, xi_width }";

const COMPOSE_KEYS: &str = "Recognized config keys:\n  \
    command      optional echo of the subcommand\n  \
    dimension    ambient dimension (default 2)\n  \
    pairs        number of random symbol pairs (default 20)\n  \
    grid_points  points per axis (default 128)\n  \
    h            semiclassical parameter (default 0.125)\n  \
    tolerance    acceptance threshold on the relative deviation (default 1e-8)\n  \
    seed         RNG seed (default 0; --seed overrides)";

const SWEEP_KEYS: &str = "Recognized config keys:\n  \
    command        optional echo of the subcommand\n  \
    dimension      ambient dimension n\n  \
    lambdas        strictly increasing frequency ladder (>= 4 values)\n  \
    ps             Lebesgue exponents; numbers or \"inf\"\n  \
    tolerance      slope tolerance (default 0.15)\n  \
    two_sided      hold the slope to |slope - delta| <= tolerance (default false)\n  \
    grid_headroom  grid sizing factor (default 8)\n  \
    symbols        optional list of symbols whose first-order defect is tracked\n  \
    quasimode      table { kind, width, rank, inner, x_width, xi_width }";

#[derive(Parser)]
#[command(
    name = "qmlab",
    version,
    about = "Joint-quasimode experiments on the flat torus",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// TOML experiment config.
    #[arg(short = 'c', long = "config", value_name = "FILE")]
    config: PathBuf,
    /// Output file for the CSV or report; stdout when omitted.
    #[arg(short = 'o', long = "output", value_name = "FILE")]
    output: Option<PathBuf>,
    /// Worker threads for independent rows.
    #[arg(long, default_value_t = 1, value_name = "K")]
    threads: usize,
    /// Seed override for randomized checks.
    #[arg(long, value_name = "S")]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the growth exponent delta(n, p, r).
    #[command(long_about = DELTA_KEYS)]
    Delta(CommonArgs),
    /// Check the three admissibility conditions at a base point.
    #[command(long_about = ADMISSIBILITY_KEYS)]
    Admissibility(CommonArgs),
    /// Run the inductive symbol factorization and report the trace.
    #[command(long_about = REDUCE_KEYS)]
    Reduce(CommonArgs),
    /// Measure iterated operator defects of a quasimode family.
    #[command(long_about = DEFECT_KEYS)]
    Defect(CommonArgs),
    /// Verify the composition expansion against iterated application.
    #[command(name = "compose-check", long_about = COMPOSE_KEYS)]
    ComposeCheck(CommonArgs),
    /// Fit L^p growth rates over a frequency ladder.
    #[command(long_about = SWEEP_KEYS)]
    Sweep(CommonArgs),
}

fn load_config(args: &CommonArgs, command_name: &str) -> Result<RawConfig, CliError> {
    let text = std::fs::read_to_string(&args.config).map_err(CliError::io)?;
    let cfg = RawConfig::parse(&text)?;
    cfg.check_command(command_name)?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<Verdict, CliError> {
    match &cli.command {
        Command::Delta(args) => {
            let cfg = load_config(args, "delta")?;
            commands::run_delta(&cfg, args.output.as_deref())
        }
        Command::Admissibility(args) => {
            let cfg = load_config(args, "admissibility")?;
            commands::run_admissibility(&cfg, args.output.as_deref())
        }
        Command::Reduce(args) => {
            let cfg = load_config(args, "reduce")?;
            commands::run_reduce(&cfg, args.output.as_deref())
        }
        Command::Defect(args) => {
            let cfg = load_config(args, "defect")?;
            commands::run_defect(&cfg, args.output.as_deref())
        }
        Command::ComposeCheck(args) => {
            let cfg = load_config(args, "compose-check")?;
            commands::run_compose_check(&cfg, args.output.as_deref(), args.seed)
        }
        Command::Sweep(args) => {
            let cfg = load_config(args, "sweep")?;
            commands::run_sweep(&cfg, args.output.as_deref(), args.threads)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Verdict::Pass) => ExitCode::from(0),
        Ok(Verdict::Fail) => ExitCode::from(1),
        Err(e) => {
            let code = e.exit_code();
            // One machine-parsable line regardless of how the source error
            // formats itself.
            let reason: String = format!("{e}")
                .split_whitespace()
                .collect::<Vec<_>>()
                .join(" ");
            eprintln!("ERROR {code}: {reason}");
            ExitCode::from(code)
        }
    }
}
