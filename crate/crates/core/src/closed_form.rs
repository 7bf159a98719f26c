//! Regime-specific solvers and the structural checks that go with them.
//!
//! Each regime reduces the general program to a smaller one:
//!
//! * `beta >= gamma`: the relay forwards everything it harvests and the
//!   source's powers are the only variables.
//! * `beta * gamma >= 1`: the source spends everything it holds each phase.
//! * `beta * gamma < 1`: the equivalent system. When the source is rich
//!   enough to supplement the relay a closed form applies; otherwise the
//!   relay-supplement branch is solved numerically.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::convex::{
    build_eq2, build_eq5, programs::eq2_schedule, solve_concave, solve_eq7_branch, Eq5Layout,
    Eq7Branch, LinearProgramShell, Sense, SolverOptions,
};
use crate::error::{Error, Result};
use crate::model::{
    classify_regime, decompose, to_physical, EquivalentSchedule, PowerSchedule, RegimeKind,
    SystemParams, REGIME_EPS,
};
use crate::report::{clamp_schedule, Algorithm, SolveReport};

/// Absolute tolerance for structural equalities.
pub const STRUCT_TOL: f64 = 1e-7;
/// Absolute tolerance for the supplement complementarity `alpha_1 alpha_2 = 0`.
pub const COMPLEMENTARITY_TOL: f64 = 1e-12;
/// Relative agreement required between two solvers' throughputs.
pub const AGREEMENT_TOL: f64 = 1e-6;

fn require(
    params: &SystemParams,
    ok: fn(RegimeKind) -> bool,
    expected: &'static str,
) -> Result<()> {
    params.validate()?;
    let kind = classify_regime(params, REGIME_EPS).kind;
    if ok(kind) {
        Ok(())
    } else {
        Err(Error::RegimeMismatch {
            expected,
            actual: kind,
        })
    }
}

/// Fully cooperative relay.
pub fn solve_beta_ge_gamma(params: &SystemParams) -> Result<SolveReport> {
    solve_beta_ge_gamma_with(params, &SolverOptions::default())
}

pub fn solve_beta_ge_gamma_with(
    params: &SystemParams,
    opts: &SolverOptions,
) -> Result<SolveReport> {
    require(params, |k| k == RegimeKind::BetaGeGamma, "beta >= gamma")?;
    let (x, diag) = solve_concave(&build_eq2(params), opts)?;
    let x: Vec<f64> = x.into_iter().map(|v| v.max(0.0)).collect();
    let sched = eq2_schedule(params, &x);
    SolveReport::new(params, Algorithm::Cooperative, sched, Some(diag), None)
}

/// Raises `var` as far as every row allows. The greedy program leaves the
/// relay supplement free whenever it does not affect throughput; spending the
/// relay's leftover on it keeps the relay's final budget tight.
fn saturate(shell: &LinearProgramShell, x: &mut [f64], var: usize) {
    let mut room = f64::INFINITY;
    for row in &shell.rows {
        let c = row.coeffs[var];
        if row.sense == Sense::Le && c > 0.0 {
            room = room.min(row.slack(x).max(0.0) / c);
        }
    }
    if room.is_finite() && room > 0.0 {
        x[var] += room;
    }
}

/// Fully greedy source.
pub fn solve_high_product(params: &SystemParams) -> Result<SolveReport> {
    solve_high_product_with(params, &SolverOptions::default())
}

pub fn solve_high_product_with(params: &SystemParams, opts: &SolverOptions) -> Result<SolveReport> {
    require(
        params,
        |k| k == RegimeKind::HighProduct,
        "beta < gamma and beta * gamma >= 1",
    )?;
    let shell = build_eq5(params);
    let (x, diag) = solve_concave(&shell, opts)?;
    let layout = Eq5Layout {
        phases: params.phases,
    };
    let mut x: Vec<f64> = x.into_iter().map(|v| v.max(0.0)).collect();
    saturate(&shell, &mut x, layout.alpha2());
    let sched = clamp_schedule(layout.schedule(params, &x));
    SolveReport::new(params, Algorithm::Greedy, sched, Some(diag), None)
}

/// Closed-form first-phase source supplement of the equivalent system:
/// `alpha_1 = (P_{1,0} - K P_{2,0}) / (1 + K beta)`.
pub fn case1_alpha1(params: &SystemParams, budget_ratio: f64) -> f64 {
    (params.initial1 - budget_ratio * params.initial2) / (1.0 + budget_ratio * params.harvest)
}

/// Equivalent system, closed form when the source supplements and a branch
/// solve otherwise.
pub fn solve_low_product(params: &SystemParams) -> Result<SolveReport> {
    solve_low_product_with(params, &SolverOptions::default())
}

pub fn solve_low_product_with(params: &SystemParams, opts: &SolverOptions) -> Result<SolveReport> {
    require(
        params,
        RegimeKind::is_low_product,
        "a low-product regime (beta < gamma, beta * gamma < 1)",
    )?;
    let regime = classify_regime(params, REGIME_EPS);
    let ch = regime
        .equivalent
        .expect("low-product regimes carry the channel");
    let n = params.phases;
    if regime.kind == RegimeKind::LowProductCase1 {
        let alpha1 = case1_alpha1(params, ch.budget_ratio).max(0.0);
        let p = (params.initial2 + alpha1 * params.harvest) / n as f64;
        let eq = EquivalentSchedule {
            data: vec![p; n],
            alpha1,
            alpha2: 0.0,
        };
        let sched = to_physical(params, &regime, &eq)?;
        return SolveReport::new(
            params,
            Algorithm::EquivalentClosedForm,
            sched,
            None,
            Some(eq),
        );
    }
    let sol = solve_eq7_branch(params, Eq7Branch::Alpha1Zero, opts)?;
    let mut eq = sol.point;
    for v in eq.data.iter_mut() {
        *v = v.max(0.0);
    }
    eq.alpha1 = 0.0;
    eq.alpha2 = eq.alpha2.max(0.0);
    let sched = to_physical(params, &regime, &eq)?;
    SolveReport::new(
        params,
        Algorithm::EquivalentBranch,
        sched,
        Some(sol.diagnostics),
        Some(eq),
    )
}

/// Dispatches to the solver for the parameters' regime.
pub fn solve(params: &SystemParams) -> Result<SolveReport> {
    solve_with(params, &SolverOptions::default())
}

pub fn solve_with(params: &SystemParams, opts: &SolverOptions) -> Result<SolveReport> {
    params.validate()?;
    match classify_regime(params, REGIME_EPS).kind {
        RegimeKind::BetaGeGamma => solve_beta_ge_gamma_with(params, opts),
        RegimeKind::HighProduct => solve_high_product_with(params, opts),
        RegimeKind::LowProductCase1 | RegimeKind::LowProductCase2 => {
            solve_low_product_with(params, opts)
        }
    }
}

/// Structural statements checked on solver outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StructureId {
    /// Relay supplements sit in the first phase only.
    P1,
    /// `P_{2,j} beta gamma >= P_{2,j+1}`.
    P2,
    /// Interior equivalent data powers are equal and no smaller than the last.
    P3,
    /// `alpha_1 alpha_2 = 0` and no supplements after the first phase.
    P4,
    /// A relay supplement rules out source supplements in phases 1 and 2.
    R1,
    /// A supplementing source implies equal interior data powers, and equal
    /// data powers throughout when the relay does not supplement.
    R2,
}

impl StructureId {
    pub fn label(self) -> &'static str {
        match self {
            Self::P1 => "P1",
            Self::P2 => "P2",
            Self::P3 => "P3",
            Self::P4 => "P4",
            Self::R1 => "R1",
            Self::R2 => "R2",
        }
    }
}

impl fmt::Display for StructureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StructuralCheck {
    pub id: StructureId,
    pub holds: bool,
    /// First violating phase (1-based); set whenever `holds` is false.
    pub witness: Option<usize>,
    pub tol: f64,
}

impl StructuralCheck {
    fn from_witness(id: StructureId, witness: Option<usize>, tol: f64) -> Self {
        Self {
            id,
            holds: witness.is_none(),
            witness,
            tol,
        }
    }
}

/// First 1-based phase `j` in `range` for which `bad(j)` holds.
fn first(range: std::ops::RangeInclusive<usize>, bad: impl Fn(usize) -> bool) -> Option<usize> {
    range.into_iter().find(|&j| bad(j))
}

fn check_p1(params: &SystemParams, sched: &PowerSchedule) -> Result<StructuralCheck> {
    let dec = decompose(params, sched)?;
    let tol = STRUCT_TOL;
    let witness = first(2..=params.phases, |j| dec.supp_relay[j - 1] > tol);
    Ok(StructuralCheck::from_witness(StructureId::P1, witness, tol))
}

fn check_p2(params: &SystemParams, sched: &PowerSchedule) -> StructuralCheck {
    let bg = params.harvest * params.gamma();
    let tol = 1e-9;
    let relay = &sched.relay;
    let witness = first(1..=params.phases.saturating_sub(1), |j| {
        relay[j - 1] * bg < relay[j] - tol
    });
    StructuralCheck::from_witness(StructureId::P2, witness, tol)
}

fn check_p3(eq: &EquivalentSchedule) -> StructuralCheck {
    let n = eq.data.len();
    let p = |j: usize| eq.data[j - 1];
    let tol = STRUCT_TOL;
    let witness = (2..n.saturating_sub(1))
        .find(|&j| (p(j) - p(j + 1)).abs() > tol)
        .or_else(|| first(2..=n.saturating_sub(1), |j| p(j) < p(n) - tol));
    StructuralCheck::from_witness(StructureId::P3, witness, tol)
}

fn check_p4(
    params: &SystemParams,
    sched: &PowerSchedule,
    eq: &EquivalentSchedule,
) -> Result<StructuralCheck> {
    if eq.alpha1 * eq.alpha2 > COMPLEMENTARITY_TOL {
        return Ok(StructuralCheck::from_witness(
            StructureId::P4,
            Some(1),
            COMPLEMENTARITY_TOL,
        ));
    }
    let dec = decompose(params, sched)?;
    let witness = first(2..=params.phases, |j| {
        dec.supp_source[j - 1] > STRUCT_TOL || dec.supp_relay[j - 1] > STRUCT_TOL
    });
    Ok(StructuralCheck::from_witness(
        StructureId::P4,
        witness,
        COMPLEMENTARITY_TOL,
    ))
}

fn check_r1(params: &SystemParams, sched: &PowerSchedule) -> Result<StructuralCheck> {
    let dec = decompose(params, sched)?;
    let tol = STRUCT_TOL;
    let witness = if dec.agg2() > tol {
        first(1..=params.phases.min(2), |j| dec.supp_source[j - 1] > tol)
    } else {
        None
    };
    Ok(StructuralCheck::from_witness(StructureId::R1, witness, tol))
}

fn check_r2(eq: &EquivalentSchedule) -> StructuralCheck {
    let n = eq.data.len();
    let tol = STRUCT_TOL;
    let witness = if eq.alpha1 > tol {
        let start = if eq.alpha2 > tol { 2 } else { 1 };
        first(start..=n.saturating_sub(1), |j| {
            (eq.data[j - 1] - eq.data[j]).abs() > tol
        })
    } else {
        None
    };
    StructuralCheck::from_witness(StructureId::R2, witness, tol)
}

/// Checks every structural statement that applies to the report's regime.
///
/// Outputs of the general solver need not be structured, so for those each
/// applicable statement is judged by whether the regime solver reaches the
/// same throughput; the witness is then the first phase where the two
/// schedules differ. Baseline reports live in a different model and yield no
/// checks.
pub fn verify_structure(
    params: &SystemParams,
    report: &SolveReport,
) -> Result<Vec<StructuralCheck>> {
    let kind = classify_regime(params, REGIME_EPS).kind;
    let ids: &[StructureId] = match kind {
        RegimeKind::BetaGeGamma => &[StructureId::P1],
        RegimeKind::HighProduct => &[StructureId::P1, StructureId::P2, StructureId::R1],
        RegimeKind::LowProductCase1 | RegimeKind::LowProductCase2 => &[
            StructureId::P1,
            StructureId::P3,
            StructureId::P4,
            StructureId::R1,
            StructureId::R2,
        ],
    };
    match report.algorithm {
        Algorithm::SourceOnly | Algorithm::RelayOnly => return Ok(Vec::new()),
        Algorithm::Reference | Algorithm::Oracle => {
            let structured = solve(params)?;
            let c = report.throughput;
            let agree = (structured.throughput - c).abs() <= AGREEMENT_TOL * c.abs().max(1.0);
            let witness = if agree {
                None
            } else {
                let differs = |j: usize| {
                    (report.schedule.source[j - 1] - structured.schedule.source[j - 1]).abs()
                        > STRUCT_TOL
                        || (report.schedule.relay[j - 1] - structured.schedule.relay[j - 1]).abs()
                            > STRUCT_TOL
                };
                Some(first(1..=params.phases, differs).unwrap_or(1))
            };
            return Ok(ids
                .iter()
                .map(|&id| StructuralCheck::from_witness(id, witness, AGREEMENT_TOL))
                .collect());
        }
        _ => {}
    }

    let sched = &report.schedule;
    let mut out = Vec::with_capacity(ids.len());
    for &id in ids {
        let check = match (id, kind) {
            (StructureId::P1, RegimeKind::BetaGeGamma) => {
                StructuralCheck::from_witness(id, None, STRUCT_TOL)
            }
            (StructureId::P1, _) => check_p1(params, sched)?,
            (StructureId::P2, _) => check_p2(params, sched),
            (StructureId::R1, _) => check_r1(params, sched)?,
            (StructureId::P3 | StructureId::P4 | StructureId::R2, _) => {
                let Some(eq) = report.equivalent.as_ref() else {
                    return Err(Error::InvalidParams {
                        name: "report",
                        reason: "low-product report without equivalent variables".into(),
                    });
                };
                match id {
                    StructureId::P3 => check_p3(eq),
                    StructureId::P4 => check_p4(params, sched, eq)?,
                    _ => check_r2(eq),
                }
            }
        };
        out.push(check);
    }
    Ok(out)
}

/// Which value an edge phase of the relay-supplement branch lands on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgeBranch {
    /// First phase limited by the source store, `p_{2,1} = P_{1,0} gamma'`.
    SourceLimited,
    /// Equal to the neighbouring interior phase.
    Interior,
    /// Last phase equal to the relay's residual store.
    Residual,
    /// Both memberships hold.
    Both,
    Neither,
}

/// Structure of a relay-supplement branch solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Case2Structure {
    pub interior_equal: bool,
    pub edges_not_larger: bool,
    pub first_plus_supplement_covers: bool,
    pub first: EdgeBranch,
    pub last: EdgeBranch,
}

impl Case2Structure {
    pub fn holds(&self) -> bool {
        self.interior_equal
            && self.edges_not_larger
            && self.first_plus_supplement_covers
            && self.first != EdgeBranch::Neither
            && self.last != EdgeBranch::Neither
    }
}

fn branch(a: bool, b: bool, first: EdgeBranch) -> EdgeBranch {
    match (a, b) {
        (true, true) => EdgeBranch::Both,
        (true, false) => first,
        (false, true) => EdgeBranch::Interior,
        (false, false) => EdgeBranch::Neither,
    }
}

/// Evaluates the relay-supplement structure on an equivalent-system point.
pub fn case2_structure(params: &SystemParams, eq: &EquivalentSchedule) -> Result<Case2Structure> {
    let regime = classify_regime(params, REGIME_EPS);
    let Some(ch) = regime.equivalent else {
        return Err(Error::RegimeMismatch {
            expected: "a low-product regime (beta < gamma, beta * gamma < 1)",
            actual: regime.kind,
        });
    };
    let n = eq.data.len();
    let p = |j: usize| eq.data[j - 1];
    let tol = STRUCT_TOL;
    let interior: Vec<usize> = (2..n).collect();
    let interior_equal = (2..n.saturating_sub(1)).all(|j| (p(j) - p(j + 1)).abs() <= tol);
    let edges_not_larger = interior
        .iter()
        .all(|&j| p(1) <= p(j) + tol && p(n) <= p(j) + tol);
    let first_plus_supplement_covers = interior.iter().all(|&j| p(1) + eq.alpha2 >= p(j) - tol);
    let first = if n >= 2 {
        branch(
            (p(1) - params.initial1 * ch.snr_ratio).abs() <= tol,
            (p(1) - p(2)).abs() <= tol,
            EdgeBranch::SourceLimited,
        )
    } else {
        EdgeBranch::Interior
    };
    let residual = params.initial2 + params.harvest * eq.alpha1
        - eq.alpha2
        - eq.data[..n - 1].iter().sum::<f64>();
    let last = if n >= 2 {
        branch(
            (p(n) - residual).abs() <= tol,
            (p(n) - p(n - 1)).abs() <= tol,
            EdgeBranch::Residual,
        )
    } else {
        EdgeBranch::Residual
    };
    Ok(Case2Structure {
        interior_equal,
        edges_not_larger,
        first_plus_supplement_covers,
        first,
        last,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{check_feasibility, FEAS_TOL};

    fn params(n: usize, g1: f64, g2: f64, beta: f64, p10: f64, p20: f64) -> SystemParams {
        SystemParams::new(1.0, n, g1, g2, beta, p10, p20).unwrap()
    }

    #[test]
    fn cooperative_single_phase() {
        let r = solve_beta_ge_gamma(&params(1, 1.0, 2.0, 0.6, 1.0, 0.0)).unwrap();
        assert!((r.schedule.source[0] - 1.0).abs() < 1e-8);
        assert!((r.schedule.relay[0] - 0.6).abs() < 1e-8);
        assert!((r.throughput - 0.5).abs() < 1e-8);
    }

    #[test]
    fn cooperative_without_source_energy_single_phase() {
        let r = solve_beta_ge_gamma(&params(1, 1.0, 2.0, 0.6, 0.0, 1.0)).unwrap();
        assert_eq!(r.throughput, 0.0);
    }

    #[test]
    fn greedy_single_phase() {
        let r = solve_high_product(&params(1, 2.0, 1.0, 0.8, 1.0, 2.0)).unwrap();
        assert!((r.throughput - 0.5 * 3f64.log2()).abs() < 1e-8);
        let f =
            check_feasibility(&params(1, 2.0, 1.0, 0.8, 1.0, 2.0), &r.schedule, FEAS_TOL).unwrap();
        assert!(f.slack2[0].abs() < 1e-7);
    }

    #[test]
    fn supplementing_source_worked_instance() {
        let p = params(2, 2.0, 1.0, 0.4, 1.0, 1.0);
        let r = solve_low_product(&p).unwrap();
        assert_eq!(r.regime.kind, RegimeKind::LowProductCase1);
        let eq = r.equivalent.clone().unwrap();
        let alpha1 = 0.625 / 1.15;
        assert!((eq.alpha1 - alpha1).abs() < 1e-12);
        for &v in &eq.data {
            assert!((v - (1.0 + 0.4 * alpha1) / 2.0).abs() < 1e-12);
        }
        assert!((r.schedule.source[0] - 0.923913).abs() < 1e-6);
        assert!((r.schedule.relay[1] - 0.760870).abs() < 1e-6);
        assert!((r.throughput - 0.816288).abs() < 1e-6);
        assert!(r.feasibility.feasible);
        assert!(r.feasibility.slack1[1].abs() < 1e-12);
        let checks = verify_structure(&p, &r).unwrap();
        assert!(checks.iter().all(|c| c.holds), "{checks:?}");
    }

    #[test]
    fn case2_branch_structure() {
        let p = params(2, 2.0, 1.0, 0.4, 0.2, 1.0);
        let r = solve_low_product(&p).unwrap();
        assert_eq!(r.regime.kind, RegimeKind::LowProductCase2);
        let eq = r.equivalent.clone().unwrap();
        assert_eq!(eq.alpha1, 0.0);
        assert!(eq.data[0] <= eq.data[1] + STRUCT_TOL);
        assert!(case2_structure(&p, &eq).unwrap().holds());
    }

    #[test]
    fn zero_harvest_matches_equal_split() {
        let p = params(2, 2.0, 1.0, 0.0, 1.0, 1.0);
        let r = solve_low_product(&p).unwrap();
        let eq = r.equivalent.unwrap();
        assert!((eq.alpha1 - 0.5).abs() < 1e-12);
        assert!((eq.data[0] - 0.5).abs() < 1e-12);
        assert!((r.throughput - 1.5f64.log2()).abs() < 1e-12);
    }

    #[test]
    fn regime_mismatch_is_an_error() {
        let p = params(2, 2.0, 1.0, 0.4, 1.0, 1.0);
        assert!(matches!(
            solve_beta_ge_gamma(&p),
            Err(Error::RegimeMismatch { .. })
        ));
        assert!(matches!(
            solve_high_product(&p),
            Err(Error::RegimeMismatch { .. })
        ));
        let q = params(2, 1.0, 2.0, 0.6, 1.0, 1.0);
        assert!(matches!(
            solve_low_product(&q),
            Err(Error::RegimeMismatch { .. })
        ));
    }

    #[test]
    fn late_relay_supplement_fails_p1() {
        let p = params(3, 2.0, 1.0, 0.4, 1.0, 1.0);
        let sched = PowerSchedule::new(vec![0.2, 0.2, 0.1], vec![0.4, 0.4, 0.5]).unwrap();
        let c = check_p1(&p, &sched).unwrap();
        assert!(!c.holds);
        assert_eq!(c.witness, Some(3));
    }

    #[test]
    fn cooperative_p1_is_vacuous() {
        let p = params(3, 1.0, 2.0, 0.6, 1.0, 0.5);
        let r = solve(&p).unwrap();
        let checks = verify_structure(&p, &r).unwrap();
        assert_eq!(checks.len(), 1);
        assert!(checks[0].holds);
    }

    #[test]
    fn greedy_structure_holds() {
        let p = params(4, 3.0, 1.0, 0.5, 0.7, 0.4);
        let r = solve(&p).unwrap();
        assert_eq!(r.algorithm, Algorithm::Greedy);
        let checks = verify_structure(&p, &r).unwrap();
        assert!(checks.iter().all(|c| c.holds), "{checks:?}");
    }
}
