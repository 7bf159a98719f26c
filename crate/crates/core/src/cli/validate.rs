use std::io::Write;

use clap::Args;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{fmt_sig, EXIT_INVARIANT, EXIT_OK, EXIT_USAGE};
use crate::closed_form::{case2_structure, solve, verify_structure, AGREEMENT_TOL, STRUCT_TOL};
use crate::convex::SolveStatus;
use crate::model::{classify_regime, RegimeKind, SystemParams, REGIME_EPS};
use crate::oracle::{grid_search, CERTIFY_TOL};
use crate::report::{solve_reference, SolveReport};

/// Largest phase count the oracle is run on.
pub const ORACLE_MAX_PHASES: usize = 3;

pub const REGIMES: [RegimeKind; 4] = [
    RegimeKind::BetaGeGamma,
    RegimeKind::HighProduct,
    RegimeKind::LowProductCase1,
    RegimeKind::LowProductCase2,
];

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Draws per regime.
    #[arg(long, default_value_t = 50)]
    trials: usize,
    /// Largest phase count drawn; at most 3.
    #[arg(long, default_value_t = 2)]
    n_max: usize,
    /// Corrupts the first regime-solver result to exercise the failure path.
    #[arg(long, hide = true)]
    inject_fault: bool,
}

/// Draws parameters in `kind` with `1 <= N <= n_max`.
pub fn draw_params(rng: &mut impl Rng, kind: RegimeKind, n_max: usize) -> SystemParams {
    loop {
        let n = rng.gen_range(1..=n_max.max(1));
        let snr2: f64 = rng.gen_range(0.5..2.0);
        let (gamma, beta) = match kind {
            RegimeKind::BetaGeGamma => {
                let g: f64 = rng.gen_range(0.05..0.9);
                (g, rng.gen_range(g..1.0))
            }
            RegimeKind::HighProduct => {
                let g: f64 = rng.gen_range(1.2..5.0);
                (g, rng.gen_range(1.0 / g..1.0))
            }
            RegimeKind::LowProductCase1 | RegimeKind::LowProductCase2 => {
                let g: f64 = rng.gen_range(0.2..4.0);
                (g, rng.gen_range(0.0..0.95) * g.min(1.0 / g))
            }
        };
        let initial2: f64 = rng.gen_range(0.1..2.0);
        let mut initial1: f64 = rng.gen_range(0.0..2.0);
        let probe = SystemParams {
            bandwidth: 1.0,
            phases: n,
            snr1: gamma * snr2,
            snr2,
            harvest: beta,
            initial1,
            initial2,
        };
        let regime = classify_regime(&probe, REGIME_EPS);
        if let Some(k) = regime.threshold(&probe) {
            initial1 = match kind {
                RegimeKind::LowProductCase1 => k * rng.gen_range(1.05..2.0),
                _ => k * rng.gen_range(0.0..0.95),
            };
        }
        let Ok(params) = SystemParams::new(1.0, n, gamma * snr2, snr2, beta, initial1, initial2)
        else {
            continue;
        };
        if classify_regime(&params, REGIME_EPS).kind == kind {
            return params;
        }
    }
}

/// Draws `trials` parameter sets per regime, in regime order.
pub fn draw_all(seed: u64, trials: usize, n_max: usize) -> Vec<SystemParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    REGIMES
        .iter()
        .flat_map(|&kind| (0..trials).map(move |_| kind))
        .map(|kind| draw_params(&mut rng, kind, n_max))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Invariant {
    Convergence,
    Feasibility,
    Agreement,
    Tightness,
    Structure,
    TableCase2,
    OracleClosed,
    OracleReference,
    OracleGap,
}

impl Invariant {
    pub const ALL: [Invariant; 9] = [
        Self::Convergence,
        Self::Feasibility,
        Self::Agreement,
        Self::Tightness,
        Self::Structure,
        Self::TableCase2,
        Self::OracleClosed,
        Self::OracleReference,
        Self::OracleGap,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Self::Convergence => "convergence",
            Self::Feasibility => "feasibility",
            Self::Agreement => "agreement",
            Self::Tightness => "tightness",
            Self::Structure => "structure",
            Self::TableCase2 => "table-case2",
            Self::OracleClosed => "oracle-closed",
            Self::OracleReference => "oracle-reference",
            Self::OracleGap => "oracle-gap",
        }
    }
}

/// Outcome of one invariant on one draw; `None` when it does not apply.
pub type Verdict = Option<bool>;

#[derive(Debug, Clone)]
pub struct DrawOutcome {
    pub params: SystemParams,
    pub regime: RegimeKind,
    pub verdicts: Vec<(Invariant, Verdict)>,
}

fn terminal_slack(report: &SolveReport) -> f64 {
    let f = &report.feasibility;
    match report.regime.kind {
        RegimeKind::BetaGeGamma => f.slack1.last(),
        _ => f.slack2.last(),
    }
    .copied()
    .unwrap_or(0.0)
}

/// Runs every invariant on one draw.
pub fn check_draw(params: &SystemParams, fault: bool) -> crate::Result<DrawOutcome> {
    let mut opt = solve(params)?;
    if fault {
        opt.throughput += 1.0;
    }
    let reference = solve_reference(params)?;
    let kind = opt.regime.kind;
    let scale = reference.throughput.abs().max(1.0);

    let converged =
        opt.status() == SolveStatus::Converged && reference.status() == SolveStatus::Converged;
    let feasible = opt.feasibility.feasible && reference.feasibility.feasible;
    let agree = (opt.throughput - reference.throughput).abs() <= AGREEMENT_TOL * scale;
    let tight = terminal_slack(&opt).abs() <= STRUCT_TOL;
    let structure = verify_structure(params, &opt)?.iter().all(|c| c.holds);
    let table = match (&opt.equivalent, kind) {
        (Some(eq), RegimeKind::LowProductCase2) => Some(case2_structure(params, eq)?.holds()),
        _ => None,
    };
    let mut verdicts = vec![
        (Invariant::Convergence, Some(converged)),
        (Invariant::Feasibility, Some(feasible)),
        (Invariant::Agreement, Some(agree)),
        (Invariant::Tightness, Some(tight)),
        (Invariant::Structure, Some(structure)),
        (Invariant::TableCase2, table),
    ];
    if params.phases <= ORACLE_MAX_PHASES {
        let spec = super::oracle_spec(params.phases).unwrap_or_default();
        let grid = grid_search(params, &spec)?;
        let certifies = |r: &SolveReport| r.throughput >= grid.throughput - CERTIFY_TOL;
        let within_gap =
            grid.throughput >= opt.throughput.max(reference.throughput) - grid.grid_gap;
        verdicts.push((Invariant::OracleClosed, Some(certifies(&opt))));
        verdicts.push((Invariant::OracleReference, Some(certifies(&reference))));
        verdicts.push((Invariant::OracleGap, Some(within_gap)));
    }
    Ok(DrawOutcome {
        params: *params,
        regime: kind,
        verdicts,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct Tally {
    checked: usize,
    failed: usize,
    first: Option<usize>,
}

/// Renders the pass/fail table and returns it with the failing invariants.
pub fn render(
    outcomes: &[DrawOutcome],
    seed: u64,
    trials: usize,
    n_max: usize,
) -> (String, Vec<Invariant>) {
    use std::fmt::Write as _;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "seed={seed} trials={trials} n_max={n_max} draws={}",
        outcomes.len()
    );
    let _ = writeln!(
        s,
        "{:<18} {:<16} {:>7} {:>7}  {:<7} first",
        "invariant", "regime", "checked", "failed", "verdict"
    );
    let mut failing = Vec::new();
    for inv in Invariant::ALL {
        let mut any_failed = false;
        for kind in REGIMES {
            let mut t = Tally::default();
            for (i, o) in outcomes
                .iter()
                .enumerate()
                .filter(|(_, o)| o.regime == kind)
            {
                if let Some((_, Some(ok))) = o.verdicts.iter().find(|(v, _)| *v == inv) {
                    t.checked += 1;
                    if !ok {
                        t.failed += 1;
                        t.first.get_or_insert(i);
                    }
                }
            }
            if t.checked == 0 {
                continue;
            }
            any_failed |= t.failed > 0;
            let first = t
                .first
                .map_or_else(|| "-".to_string(), |i| describe(i, &outcomes[i].params));
            let _ = writeln!(
                s,
                "{:<18} {:<16} {:>7} {:>7}  {:<7} {}",
                inv.label(),
                kind.label(),
                t.checked,
                t.failed,
                if t.failed == 0 { "PASS" } else { "FAIL" },
                first
            );
        }
        if any_failed {
            failing.push(inv);
        }
    }
    if failing.is_empty() {
        let _ = writeln!(s, "result: PASS");
    } else {
        let names: Vec<_> = failing.iter().map(|i| i.label()).collect();
        let _ = writeln!(s, "result: FAIL ({})", names.join(", "));
    }
    (s, failing)
}

fn describe(index: usize, p: &SystemParams) -> String {
    format!(
        "#{index} N={} gamma1={} gamma2={} beta={} P10={} P20={}",
        p.phases,
        fmt_sig(p.snr1),
        fmt_sig(p.snr2),
        fmt_sig(p.harvest),
        fmt_sig(p.initial1),
        fmt_sig(p.initial2)
    )
}

pub(super) fn cmd_validate(args: &ValidateArgs, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    if args.trials == 0 {
        let _ = writeln!(err, "error: --trials must be at least 1");
        return EXIT_USAGE;
    }
    if !(1..=ORACLE_MAX_PHASES).contains(&args.n_max) {
        let _ = writeln!(
            err,
            "error: --n-max must be between 1 and {ORACLE_MAX_PHASES} for the oracle, got {}",
            args.n_max
        );
        return EXIT_USAGE;
    }
    let draws = draw_all(args.seed, args.trials, args.n_max);
    let outcomes: crate::Result<Vec<DrawOutcome>> = draws
        .par_iter()
        .enumerate()
        .map(|(i, p)| check_draw(p, args.inject_fault && i == 0))
        .collect();
    let outcomes = match outcomes {
        Ok(o) => o,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_INVARIANT;
        }
    };
    let (table, failing) = render(&outcomes, args.seed, args.trials, args.n_max);
    if out.write_all(table.as_bytes()).is_err() {
        return EXIT_USAGE;
    }
    if failing.is_empty() {
        EXIT_OK
    } else {
        EXIT_INVARIANT
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn draws_land_in_their_regime() {
        let draws = draw_all(7, 5, 3);
        assert_eq!(draws.len(), 20);
        for (i, p) in draws.iter().enumerate() {
            assert_eq!(classify_regime(p, REGIME_EPS).kind, REGIMES[i / 5]);
            assert!((1..=3).contains(&p.phases));
        }
        assert_eq!(draws, draw_all(7, 5, 3));
    }

    #[test]
    fn fault_is_reported_by_name() {
        let p = draw_all(42, 1, 1)[0];
        let clean = check_draw(&p, false).unwrap();
        let bad = check_draw(&p, true).unwrap();
        let (_, failing) = render(&[clean], 42, 1, 1);
        assert!(failing.is_empty(), "{failing:?}");
        let (table, failing) = render(&[bad], 42, 1, 1);
        assert!(failing.contains(&Invariant::Agreement));
        assert!(table.contains("agreement"));
        assert!(table.contains("result: FAIL"));
    }
}
