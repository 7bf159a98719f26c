use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::Args;
use rayon::prelude::*;

use super::svg::{line_chart, Series};
use super::{config, fmt_sig, parse_threads, resolve_path, run_alg, Alg};
use super::{EXIT_INVARIANT, EXIT_NONCONVERGED, EXIT_OK, EXIT_USAGE};
use crate::convex::SolveStatus;
use crate::model::SystemParams;

/// Tolerated drop between consecutive OPT points under `--check-monotone`.
pub const MONOTONE_TOL: f64 = 1e-7;

pub const CSV_HEADER: [&str; 6] = ["axis", "algorithm", "throughput", "regime", "status", "ms"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Axis {
    Beta,
    Phases,
    Gamma1,
    Initial1,
    Initial2,
}

impl Axis {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s.trim() {
            "beta" => Self::Beta,
            "n_phases" | "n" => Self::Phases,
            "gamma1" => Self::Gamma1,
            "initial1" | "p10" => Self::Initial1,
            "initial2" | "p20" => Self::Initial2,
            _ => return None,
        })
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::Beta => "beta",
            Self::Phases => "n_phases",
            Self::Gamma1 => "gamma1",
            Self::Initial1 => "initial1",
            Self::Initial2 => "initial2",
        }
    }

    fn key(self) -> &'static str {
        match self {
            Self::Beta => "beta",
            Self::Phases => "n",
            Self::Gamma1 => "gamma1",
            Self::Initial1 => "p10",
            Self::Initial2 => "p20",
        }
    }
}

/// Fixed parameters in the order they appear in config files and flags.
const PARAM_KEYS: [&str; 7] = ["n", "gamma1", "gamma2", "beta", "p10", "p20", "b"];
const PARAM_DEFAULTS: [f64; 7] = [4.0, 1.0, 1.0, 0.5, 1.0, 1.0, 1.0];

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// `key = value` file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// beta | n_phases | gamma1 | initial1 | initial2
    #[arg(long)]
    axis: Option<String>,
    /// Comma list or start:step:end.
    #[arg(long)]
    values: Option<String>,
    /// Comma-separated subset of opt, ref, sno, rno, oracle.
    #[arg(long)]
    algs: Option<String>,
    /// Number of phases; a comma list sweeps every combination.
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    gamma1: Option<String>,
    #[arg(long)]
    gamma2: Option<String>,
    #[arg(long)]
    beta: Option<String>,
    #[arg(long)]
    p10: Option<String>,
    #[arg(long)]
    p20: Option<String>,
    #[arg(long)]
    b: Option<String>,
    /// CSV destination; stdout when absent or `-`.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    svg: Option<PathBuf>,
    /// Exit 3 if OPT drops by more than 1e-7 along a beta or n_phases axis.
    #[arg(long)]
    check_monotone: bool,
    /// Fill the `ms` column with wall time.
    #[arg(long)]
    timing: bool,
}

/// Fully resolved sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub axis: Axis,
    pub values: Vec<f64>,
    /// Values of every fixed parameter, keyed as in [`PARAM_KEYS`].
    pub fixed: Vec<(&'static str, Vec<f64>)>,
    pub algorithms: Vec<Alg>,
    pub csv: Option<PathBuf>,
    pub svg: Option<PathBuf>,
    pub check_monotone: bool,
    pub timing: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub axis_value: f64,
    pub series: String,
    pub algorithm: Alg,
    pub combo: usize,
    pub throughput: f64,
    pub regime: &'static str,
    pub status: SolveStatus,
    pub ms: Option<f64>,
}

impl SweepConfig {
    fn from_args(args: &SweepArgs) -> Result<Self, String> {
        let mut map = match &args.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
                config::parse(&text)?
            }
            None => BTreeMap::new(),
        };
        let flags = [
            ("axis", &args.axis),
            ("values", &args.values),
            ("algs", &args.algs),
            ("n", &args.n),
            ("gamma1", &args.gamma1),
            ("gamma2", &args.gamma2),
            ("beta", &args.beta),
            ("p10", &args.p10),
            ("p20", &args.p20),
            ("b", &args.b),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                map.insert(key.to_string(), v.clone());
            }
        }
        let path_of = |flag: &Option<PathBuf>, key: &str| {
            flag.clone().or_else(|| map.get(key).map(PathBuf::from))
        };
        let csv = path_of(&args.csv, "csv");
        let svg = path_of(&args.svg, "svg");
        let bool_of = |flag: bool, key: &str| -> Result<bool, String> {
            match map.get(key) {
                _ if flag => Ok(true),
                Some(v) => config::parse_bool(v).map_err(|e| format!("{key}: {e}")),
                None => Ok(false),
            }
        };
        let check_monotone = bool_of(args.check_monotone, "check_monotone")?;
        let timing = bool_of(args.timing, "timing")?;

        let known = [
            "axis",
            "values",
            "algs",
            "csv",
            "svg",
            "check_monotone",
            "timing",
        ];
        if let Some(k) = map
            .keys()
            .find(|k| !known.contains(&k.as_str()) && !PARAM_KEYS.contains(&k.as_str()))
        {
            return Err(format!("unknown key `{k}`"));
        }

        let axis_name = map.get("axis").ok_or("no sweep axis given")?;
        let axis = Axis::parse(axis_name).ok_or_else(|| format!("unknown axis `{axis_name}`"))?;
        let values = config::parse_values(map.get("values").map_or("", String::as_str))?;
        if values.is_empty() {
            return Err("the axis has no values".into());
        }
        if values.windows(2).any(|w| w[1] <= w[0]) {
            return Err("axis values must be strictly increasing".into());
        }
        if axis == Axis::Phases {
            check_phase_counts(&values)?;
        }

        let mut fixed = Vec::new();
        for (key, default) in PARAM_KEYS.into_iter().zip(PARAM_DEFAULTS) {
            if key == axis.key() {
                continue;
            }
            let vals = match map.get(key) {
                Some(text) => config::parse_values(text).map_err(|e| format!("{key}: {e}"))?,
                None => vec![default],
            };
            if vals.is_empty() {
                return Err(format!("{key}: no values"));
            }
            if key == "n" {
                check_phase_counts(&vals)?;
            }
            fixed.push((key, vals));
        }

        let mut algorithms = Vec::new();
        for name in map.get("algs").map_or("opt", String::as_str).split(',') {
            let alg = Alg::parse(name.trim())
                .ok_or_else(|| format!("unknown algorithm `{}`", name.trim()))?;
            if !algorithms.contains(&alg) {
                algorithms.push(alg);
            }
        }

        Ok(Self {
            axis,
            values,
            fixed,
            algorithms,
            csv,
            svg,
            check_monotone,
            timing,
        })
    }

    /// Cartesian product of the fixed parameter lists, first key slowest.
    fn combinations(&self) -> Vec<Vec<(&'static str, f64)>> {
        let mut combos = vec![Vec::new()];
        for (key, vals) in &self.fixed {
            combos = combos
                .into_iter()
                .flat_map(|c| {
                    vals.iter().map(move |&v| {
                        let mut c = c.clone();
                        c.push((*key, v));
                        c
                    })
                })
                .collect();
        }
        combos
    }

    fn series_label(&self, alg: Alg, combo: &[(&'static str, f64)]) -> String {
        let varying: Vec<String> = combo
            .iter()
            .filter(|(key, _)| self.fixed.iter().any(|(k, v)| k == key && v.len() > 1))
            .map(|(key, v)| format!("{key}={}", fmt_sig(*v)))
            .collect();
        if varying.is_empty() {
            alg.label().to_string()
        } else {
            format!("{}@{}", alg.label(), varying.join(";"))
        }
    }

    fn params(
        &self,
        combo: &[(&'static str, f64)],
        axis_value: f64,
    ) -> crate::Result<SystemParams> {
        let get = |key: &str| {
            if key == self.axis.key() {
                axis_value
            } else {
                combo
                    .iter()
                    .find(|(k, _)| *k == key)
                    .map_or(f64::NAN, |p| p.1)
            }
        };
        SystemParams::new(
            get("b"),
            get("n") as usize,
            get("gamma1"),
            get("gamma2"),
            get("beta"),
            get("p10"),
            get("p20"),
        )
    }
}

fn check_phase_counts(values: &[f64]) -> Result<(), String> {
    match values.iter().find(|&&v| v < 1.0 || v.fract() != 0.0) {
        Some(v) => Err(format!(
            "phase count {} is not a positive integer",
            fmt_sig(*v)
        )),
        None => Ok(()),
    }
}

struct Task<'a> {
    combo: usize,
    params: &'a [(&'static str, f64)],
    alg: Alg,
    axis_value: f64,
    series: String,
}

/// Evaluates every point of the sweep. Rows are ordered by parameter
/// combination, then algorithm, then axis value, whatever the thread count.
pub fn run_sweep(cfg: &SweepConfig, threads: Option<usize>) -> crate::Result<Vec<SweepRow>> {
    let combos = cfg.combinations();
    let mut tasks = Vec::new();
    for (ci, combo) in combos.iter().enumerate() {
        for &alg in &cfg.algorithms {
            let series = cfg.series_label(alg, combo);
            for &x in &cfg.values {
                tasks.push(Task {
                    combo: ci,
                    params: combo,
                    alg,
                    axis_value: x,
                    series: series.clone(),
                });
            }
        }
    }
    let eval = |t: &Task| -> crate::Result<SweepRow> {
        let start = Instant::now();
        let params = cfg.params(t.params, t.axis_value)?;
        let report = run_alg(&params, t.alg)?;
        Ok(SweepRow {
            axis_value: t.axis_value,
            series: t.series.clone(),
            algorithm: t.alg,
            combo: t.combo,
            throughput: report.throughput,
            regime: report.regime.kind.label(),
            status: report.status(),
            ms: cfg.timing.then(|| start.elapsed().as_secs_f64() * 1e3),
        })
    };
    match threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| crate::Error::InvalidProgram(format!("thread pool: {e}")))?;
            pool.install(|| tasks.par_iter().map(eval).collect())
        }
        None => tasks.par_iter().map(eval).collect(),
    }
}

/// Serialises rows as CSV.
pub fn write_csv<W: Write>(out: W, rows: &[SweepRow], axis: Axis) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        let x = if axis == Axis::Phases {
            format!("{}", r.axis_value as usize)
        } else {
            fmt_sig(r.axis_value)
        };
        w.write_record([
            x.as_str(),
            r.series.as_str(),
            &fmt_sig(r.throughput),
            r.regime,
            r.status.label(),
            &r.ms.map(fmt_sig).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// First OPT drop larger than [`MONOTONE_TOL`] along the axis, if any.
pub fn monotone_violation(rows: &[SweepRow]) -> Option<(&SweepRow, &SweepRow)> {
    rows.windows(2)
        .filter(|w| {
            w[0].algorithm == Alg::Opt && w[1].algorithm == Alg::Opt && w[0].series == w[1].series
        })
        .find(|w| w[1].throughput < w[0].throughput - MONOTONE_TOL)
        .map(|w| (&w[0], &w[1]))
}

fn chart(rows: &[SweepRow], axis: Axis) -> String {
    let mut series: Vec<Series> = Vec::new();
    for r in rows {
        match series.last_mut() {
            Some(s) if s.label == r.series => s.points.push((r.axis_value, r.throughput)),
            _ => series.push(Series {
                label: r.series.clone(),
                points: vec![(r.axis_value, r.throughput)],
            }),
        }
    }
    line_chart(
        &format!("Throughput vs {}", axis.label()),
        axis.label(),
        "throughput (bit/s/Hz)",
        &series,
    )
}

pub(super) fn cmd_sweep(
    args: &SweepArgs,
    threads_env: Option<&str>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32 {
    let cfg = match SweepConfig::from_args(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_USAGE;
        }
    };
    let threads = match parse_threads(threads_env) {
        Ok(t) => t,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_USAGE;
        }
    };
    let rows = match run_sweep(&cfg, threads) {
        Ok(r) => r,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_USAGE;
        }
    };

    let mut buf = Vec::new();
    if let Err(e) = write_csv(&mut buf, &rows, cfg.axis) {
        let _ = writeln!(err, "error: {e}");
        return EXIT_USAGE;
    }
    let written = match resolve_path(&cfg.csv) {
        Some(path) => {
            fs::write(path, &buf).map_err(|e| format!("cannot write {}: {e}", path.display()))
        }
        None => out.write_all(&buf).map_err(|e| e.to_string()),
    };
    if let Err(e) = written {
        let _ = writeln!(err, "error: {e}");
        return EXIT_USAGE;
    }
    if let Some(path) = &cfg.svg {
        if let Err(e) = fs::write(path, chart(&rows, cfg.axis)) {
            let _ = writeln!(err, "error: cannot write {}: {e}", path.display());
            return EXIT_USAGE;
        }
    }

    if let Some(r) = rows.iter().find(|r| r.status != SolveStatus::Converged) {
        let _ = writeln!(
            err,
            "error: {} did not converge at {}={} ({})",
            r.series,
            cfg.axis.label(),
            fmt_sig(r.axis_value),
            r.status
        );
        return EXIT_NONCONVERGED;
    }
    if cfg.check_monotone && matches!(cfg.axis, Axis::Beta | Axis::Phases) {
        if let Some((a, b)) = monotone_violation(&rows) {
            let _ = writeln!(
                err,
                "monotonicity violated: {} drops from {} at {}={} to {} at {}={}",
                a.series,
                fmt_sig(a.throughput),
                cfg.axis.label(),
                fmt_sig(a.axis_value),
                fmt_sig(b.throughput),
                cfg.axis.label(),
                fmt_sig(b.axis_value)
            );
            return EXIT_INVARIANT;
        }
    }
    EXIT_OK
}
