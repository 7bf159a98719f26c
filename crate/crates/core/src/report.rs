//! Common result type for every solver in the crate.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::convex::{
    build_eq1, programs::energy_schedule, solve_concave, SolveStatus, SolverDiagnostics,
    SolverOptions,
};
use crate::error::Result;
use crate::model::{
    check_feasibility_with, classify_regime, throughput, EquivalentSchedule, FeasibilityReport,
    Harvesting, PowerSchedule, Regime, SystemParams, FEAS_TOL, REGIME_EPS,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    /// Fully cooperative relay (`beta >= gamma`).
    Cooperative,
    /// Fully greedy source (`beta * gamma >= 1`).
    Greedy,
    /// Closed form for the supplementing source case.
    EquivalentClosedForm,
    /// Relay-supplement branch of the equivalent program.
    EquivalentBranch,
    /// Direct solve of the general program.
    Reference,
    /// Source-only harvesting baseline.
    SourceOnly,
    /// Relay-only harvesting baseline.
    RelayOnly,
    /// Grid search.
    Oracle,
}

impl Algorithm {
    pub fn label(self) -> &'static str {
        match self {
            Self::Cooperative => "cooperative",
            Self::Greedy => "greedy",
            Self::EquivalentClosedForm => "equivalent-closed-form",
            Self::EquivalentBranch => "equivalent-branch",
            Self::Reference => "reference",
            Self::SourceOnly => "sno",
            Self::RelayOnly => "rno",
            Self::Oracle => "oracle",
        }
    }

    /// The harvesting model whose constraints the schedule satisfies.
    pub fn harvesting(self) -> Harvesting {
        match self {
            Self::SourceOnly => Harvesting::SourceOnly,
            Self::RelayOnly => Harvesting::RelayOnly,
            _ => Harvesting::Mutual,
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub algorithm: Algorithm,
    pub schedule: PowerSchedule,
    pub throughput: f64,
    pub regime: Regime,
    /// Slacks under the algorithm's own harvesting model.
    pub feasibility: FeasibilityReport,
    /// Absent for pure closed forms.
    pub diagnostics: Option<SolverDiagnostics>,
    /// Equivalent-system variables for the low-product solvers.
    pub equivalent: Option<EquivalentSchedule>,
}

impl SolveReport {
    pub fn new(
        params: &SystemParams,
        algorithm: Algorithm,
        schedule: PowerSchedule,
        diagnostics: Option<SolverDiagnostics>,
        equivalent: Option<EquivalentSchedule>,
    ) -> Result<Self> {
        let throughput = throughput(params, &schedule)?;
        let feasibility =
            check_feasibility_with(params, algorithm.harvesting(), &schedule, FEAS_TOL)?;
        Ok(Self {
            algorithm,
            schedule,
            throughput,
            regime: classify_regime(params, REGIME_EPS),
            feasibility,
            diagnostics,
            equivalent,
        })
    }

    /// Solver status; closed forms count as converged.
    pub fn status(&self) -> SolveStatus {
        self.diagnostics
            .as_ref()
            .map_or(SolveStatus::Converged, |d| d.status)
    }
}

/// Clamps tiny negative solver outputs to zero so they form a valid schedule.
pub(crate) fn clamp_schedule(mut sched: PowerSchedule) -> PowerSchedule {
    for v in sched.source.iter_mut().chain(sched.relay.iter_mut()) {
        *v = v.max(0.0);
    }
    sched
}

/// Solves the general allocation problem directly.
pub fn solve_reference(params: &SystemParams) -> Result<SolveReport> {
    solve_reference_with(params, &SolverOptions::default())
}

pub fn solve_reference_with(params: &SystemParams, opts: &SolverOptions) -> Result<SolveReport> {
    params.validate()?;
    let (x, diag) = solve_concave(&build_eq1(params), opts)?;
    let sched = clamp_schedule(energy_schedule(params, &x));
    SolveReport::new(params, Algorithm::Reference, sched, Some(diag), None)
}
