//! Comparison policies in which only one node harvests.
//!
//! * Source-only: the relay lives on its initial store while the source still
//!   harvests from the relay's transmissions.
//! * Relay-only: the source holds both initial stores and the relay starts
//!   empty, spending only what it harvests within each phase.

use crate::convex::{
    build_energy_program, programs::energy_schedule, solve_concave, SolverOptions,
};
use crate::error::Result;
use crate::model::{Harvesting, SystemParams};
use crate::report::{clamp_schedule, Algorithm, SolveReport};

fn solve_restricted(
    params: &SystemParams,
    harvesting: Harvesting,
    algorithm: Algorithm,
    opts: &SolverOptions,
) -> Result<SolveReport> {
    params.validate()?;
    let (x, diag) = solve_concave(&build_energy_program(params, harvesting), opts)?;
    let sched = clamp_schedule(energy_schedule(params, &x));
    SolveReport::new(params, algorithm, sched, Some(diag), None)
}

pub fn solve_sno(params: &SystemParams) -> Result<SolveReport> {
    solve_sno_with(params, &SolverOptions::default())
}

pub fn solve_sno_with(params: &SystemParams, opts: &SolverOptions) -> Result<SolveReport> {
    solve_restricted(params, Harvesting::SourceOnly, Algorithm::SourceOnly, opts)
}

pub fn solve_rno(params: &SystemParams) -> Result<SolveReport> {
    solve_rno_with(params, &SolverOptions::default())
}

pub fn solve_rno_with(params: &SystemParams, opts: &SolverOptions) -> Result<SolveReport> {
    solve_restricted(params, Harvesting::RelayOnly, Algorithm::RelayOnly, opts)
}
