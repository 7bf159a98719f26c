//! The `relay-eh` command line: `solve`, `sweep` and `validate`.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 solver non-convergence,
//! 3 invariant violation.

mod config;
mod format;
mod svg;
pub mod sweep;
pub mod validate;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::baselines::{solve_rno, solve_sno};
use crate::closed_form::{solve, verify_structure, StructuralCheck};
use crate::convex::SolveStatus;
use crate::error::Result;
use crate::model::{decompose, DecomposedSchedule, SystemParams};
use crate::oracle::{grid_search_with, GridSpec};
use crate::report::{solve_reference, Algorithm, SolveReport};

pub use format::fmt_sig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NONCONVERGED: i32 = 2;
pub const EXIT_INVARIANT: i32 = 3;

/// Environment variable capping sweep parallelism; `0` runs sequentially.
pub const THREADS_ENV: &str = "RELAY_EH_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "relay-eh",
    version,
    about = "Power allocation for energy-harvesting two-hop relays"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve one instance and print the schedule.
    Solve(SolveArgs),
    /// Sweep one parameter and write CSV and SVG output.
    Sweep(sweep::SweepArgs),
    /// Cross-check the regime solvers, the reference solver and the oracle.
    Validate(validate::ValidateArgs),
}

/// Which solver produces a schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Alg {
    /// Regime solver.
    Opt,
    /// Direct solve of the general program.
    Ref,
    /// Source-only harvesting baseline.
    Sno,
    /// Relay-only harvesting baseline.
    Rno,
    /// Grid search.
    Oracle,
}

impl Alg {
    pub fn label(self) -> &'static str {
        match self {
            Self::Opt => "opt",
            Self::Ref => "ref",
            Self::Sno => "sno",
            Self::Rno => "rno",
            Self::Oracle => "oracle",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        <Self as ValueEnum>::from_str(s, true).ok()
    }
}

/// Grid used when the oracle runs as a solver: the default for up to two
/// phases, a coarser one for three.
pub fn oracle_spec(phases: usize) -> Option<GridSpec> {
    match phases {
        0..=2 => Some(GridSpec::default()),
        3 => Some(GridSpec::new(15, 3)),
        _ => None,
    }
}

/// Runs one algorithm on one instance.
pub fn run_alg(params: &SystemParams, alg: Alg) -> Result<SolveReport> {
    match alg {
        Alg::Opt => solve(params),
        Alg::Ref => solve_reference(params),
        Alg::Sno => solve_sno(params),
        Alg::Rno => solve_rno(params),
        Alg::Oracle => {
            let spec = oracle_spec(params.phases).ok_or_else(|| {
                crate::Error::Grid(format!(
                    "the oracle supports at most 3 phases, got {}",
                    params.phases
                ))
            })?;
            let grid = grid_search_with(params, crate::model::Harvesting::Mutual, &spec)?;
            SolveReport::new(params, Algorithm::Oracle, grid.schedule, None, None)
        }
    }
}

#[derive(Debug, Clone, Args)]
struct ParamArgs {
    /// Number of phases N.
    #[arg(long)]
    n: usize,
    /// SNR of the source-relay link per unit power.
    #[arg(long)]
    gamma1: f64,
    /// SNR of the relay-destination link per unit power.
    #[arg(long)]
    gamma2: f64,
    /// Harvesting gain.
    #[arg(long)]
    beta: f64,
    /// Initial source energy.
    #[arg(long)]
    p10: f64,
    /// Initial relay energy.
    #[arg(long)]
    p20: f64,
    /// Bandwidth.
    #[arg(long, default_value_t = 1.0)]
    b: f64,
}

impl ParamArgs {
    fn params(&self) -> Result<SystemParams> {
        SystemParams::new(
            self.b,
            self.n,
            self.gamma1,
            self.gamma2,
            self.beta,
            self.p10,
            self.p20,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Text,
    Json,
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[command(flatten)]
    params: ParamArgs,
    #[arg(long, value_enum, default_value_t = Alg::Opt)]
    alg: Alg,
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    format: OutputFormat,
}

#[derive(Serialize)]
struct SolveOutput<'a> {
    params: &'a SystemParams,
    algorithm: &'static str,
    report: &'a SolveReport,
    decomposition: &'a DecomposedSchedule,
    structure: &'a [StructuralCheck],
}

fn cmd_solve(args: &SolveArgs, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let outcome = args.params.params().and_then(|p| {
        let report = run_alg(&p, args.alg)?;
        let dec = decompose(&p, &report.schedule)?;
        let checks = verify_structure(&p, &report)?;
        Ok((p, report, dec, checks))
    });
    let (params, report, dec, checks) = match outcome {
        Ok(v) => v,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_USAGE;
        }
    };
    let written = match args.format {
        OutputFormat::Json => {
            let doc = SolveOutput {
                params: &params,
                algorithm: args.alg.label(),
                report: &report,
                decomposition: &dec,
                structure: &checks,
            };
            serde_json::to_string_pretty(&doc)
                .map_err(std::io::Error::other)
                .and_then(|s| writeln!(out, "{s}"))
        }
        OutputFormat::Text => {
            format::write_solve_text(out, &params, args.alg, &report, &dec, &checks)
        }
    };
    if let Err(e) = written {
        let _ = writeln!(err, "error: {e}");
        return EXIT_USAGE;
    }
    match report.status() {
        SolveStatus::Converged => EXIT_OK,
        _ => EXIT_NONCONVERGED,
    }
}

/// Parses `args` (program name first) and runs the selected command.
/// `threads` is the raw value of [`THREADS_ENV`], if set.
pub fn run<I, T>(args: I, threads: Option<String>, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let rendered = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(err, "{rendered}");
            } else {
                let _ = write!(out, "{rendered}");
            }
            return code;
        }
    };
    match cli.command {
        Command::Solve(args) => cmd_solve(&args, out, err),
        Command::Sweep(args) => sweep::cmd_sweep(&args, threads.as_deref(), out, err),
        Command::Validate(args) => validate::cmd_validate(&args, out, err),
    }
}

fn parse_threads(raw: Option<&str>) -> std::result::Result<Option<usize>, String> {
    match raw.map(str::trim) {
        None | Some("") => Ok(None),
        Some(s) => s
            .parse::<usize>()
            .map(|n| Some(n.max(1)))
            .map_err(|_| format!("{THREADS_ENV} must be a non-negative integer, got `{s}`")),
    }
}

fn resolve_path(p: &Option<PathBuf>) -> Option<&PathBuf> {
    p.as_ref().filter(|p| p.as_os_str() != "-")
}
