//! Builders for the concrete programs: the general allocation problem, its
//! restrictions for the cooperative and greedy regimes, and the equivalent
//! system used when `beta * gamma < 1`.

use crate::convex::{
    solve_concave, ConstraintRow, ConstraintTag, LinearProgramShell, LogTerm, PhaseTerm, Sense,
    SolveStatus, SolverDiagnostics, SolverOptions,
};
use crate::error::{Error, Result};
use crate::model::{
    classify_regime, EquivalentSchedule, Harvesting, PowerSchedule, SystemParams, REGIME_EPS,
};

fn row(coeffs: Vec<f64>, bound: f64, sense: Sense, tag: ConstraintTag) -> ConstraintRow {
    ConstraintRow {
        coeffs,
        bound,
        sense,
        tag,
    }
}

fn names(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (1..=n).map(move |j| format!("{prefix}_{j}"))
}

/// Energy-causality program over the physical powers
/// `[P_{1,1}..P_{1,N}, P_{2,1}..P_{2,N}]` under the given harvesting model.
/// With [`Harvesting::Mutual`] this is the general allocation problem.
pub fn build_energy_program(params: &SystemParams, harvesting: Harvesting) -> LinearProgramShell {
    let n = params.phases;
    let beta = params.harvest;
    let src = |j: usize| j;
    let rel = |j: usize| n + j;
    let mut rows = Vec::with_capacity(2 * n);
    for j in 0..n {
        let mut c = vec![0.0; 2 * n];
        for k in 0..=j {
            c[src(k)] = 1.0;
        }
        let bound = match harvesting {
            Harvesting::Mutual | Harvesting::SourceOnly => {
                for k in 0..j {
                    c[rel(k)] = -beta;
                }
                params.initial1
            }
            Harvesting::RelayOnly => params.initial1 + params.initial2,
        };
        rows.push(row(c, bound, Sense::Le, ConstraintTag::Ec1(j + 1)));
    }
    for j in 0..n {
        let mut c = vec![0.0; 2 * n];
        for k in 0..=j {
            c[rel(k)] = 1.0;
        }
        let bound = match harvesting {
            Harvesting::Mutual => {
                for k in 0..=j {
                    c[src(k)] = -beta;
                }
                params.initial2
            }
            Harvesting::SourceOnly => params.initial2,
            Harvesting::RelayOnly => {
                for k in 0..=j {
                    c[src(k)] = -beta;
                }
                0.0
            }
        };
        rows.push(row(c, bound, Sense::Le, ConstraintTag::Ec2(j + 1)));
    }
    let weight = 0.5 * params.bandwidth;
    let objective = (0..n)
        .map(|j| PhaseTerm {
            weight,
            terms: vec![
                LogTerm {
                    var: src(j),
                    gain: params.snr1,
                },
                LogTerm {
                    var: rel(j),
                    gain: params.snr2,
                },
            ],
        })
        .collect();
    LinearProgramShell {
        var_names: names("P1", n).chain(names("P2", n)).collect(),
        rows,
        objective,
    }
}

pub fn build_eq1(params: &SystemParams) -> LinearProgramShell {
    build_energy_program(params, Harvesting::Mutual)
}

/// Maps a solution of [`build_energy_program`] back to a schedule.
pub fn energy_schedule(params: &SystemParams, x: &[f64]) -> PowerSchedule {
    let n = params.phases;
    PowerSchedule {
        source: x[..n].to_vec(),
        relay: x[n..2 * n].to_vec(),
    }
}

/// Fully cooperative relay: variables `P_{1,j}` with the relay forwarding
/// `beta P_{1,j}` (plus its whole initial store in phase 1).
pub fn build_eq2(params: &SystemParams) -> LinearProgramShell {
    let n = params.phases;
    let beta = params.harvest;
    let mut rows = Vec::with_capacity(n);
    for j in 0..n {
        let mut c = vec![0.0; n];
        for (k, ck) in c.iter_mut().enumerate().take(j + 1) {
            *ck = if k < j { 1.0 - beta * beta } else { 1.0 };
        }
        let bound = if j == 0 {
            params.initial1
        } else {
            params.initial1 + params.initial2 * beta
        };
        rows.push(row(c, bound, Sense::Le, ConstraintTag::Ec1(j + 1)));
    }
    let weight = 0.5 * params.bandwidth;
    LinearProgramShell {
        var_names: names("P1", n).collect(),
        rows,
        objective: (0..n)
            .map(|j| PhaseTerm {
                weight,
                terms: vec![LogTerm {
                    var: j,
                    gain: params.snr1,
                }],
            })
            .collect(),
    }
}

pub fn eq2_schedule(params: &SystemParams, x: &[f64]) -> PowerSchedule {
    let source = x.to_vec();
    let mut relay: Vec<f64> = x.iter().map(|p| p * params.harvest).collect();
    relay[0] += params.initial2;
    PowerSchedule { source, relay }
}

/// Variable layout of the greedy-source program: `[p_{2,1}..p_{2,N}, alpha_2]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Eq5Layout {
    pub phases: usize,
}

impl Eq5Layout {
    pub fn alpha2(&self) -> usize {
        self.phases
    }

    /// Physical schedule with the source spending everything it holds each
    /// phase.
    pub fn schedule(&self, params: &SystemParams, x: &[f64]) -> PowerSchedule {
        let n = self.phases;
        let beta = params.harvest;
        let alpha2 = x[self.alpha2()];
        let mut source = vec![0.0; n];
        let mut relay: Vec<f64> = x[..n].to_vec();
        source[0] = params.initial1;
        for j in 1..n {
            source[j] = if j == 1 {
                (x[0] + alpha2) * beta
            } else {
                x[j - 1] * beta
            };
        }
        relay[0] += alpha2;
        PowerSchedule { source, relay }
    }
}

/// Fully greedy source: variables `p_{2,j}` and the aggregated relay
/// supplement `alpha_2`.
pub fn build_eq5(params: &SystemParams) -> LinearProgramShell {
    let n = params.phases;
    let layout = Eq5Layout { phases: n };
    let a2 = layout.alpha2();
    let beta = params.harvest;
    let bg = beta * params.gamma();
    let mut rows = Vec::new();

    let mut c = vec![0.0; n + 1];
    c[0] = 1.0;
    rows.push(row(
        c,
        params.initial1 * params.gamma(),
        Sense::Le,
        ConstraintTag::Ec1(1),
    ));

    let budget = params.initial2 + params.initial1 * beta;
    for j in 0..n {
        let mut c = vec![0.0; n + 1];
        if j == 0 {
            c[0] = 1.0;
            c[a2] = 1.0;
        } else {
            for (k, ck) in c.iter_mut().enumerate().take(j + 1) {
                *ck = if k < j { 1.0 - beta * beta } else { 1.0 };
            }
            c[a2] = 1.0 - beta * beta;
        }
        rows.push(row(c, budget, Sense::Le, ConstraintTag::Ec2(j + 1)));
    }

    for j in 1..n {
        let mut c = vec![0.0; n + 1];
        c[j] = 1.0;
        c[j - 1] = -bg;
        if j == 1 {
            c[a2] = -bg;
        }
        rows.push(row(c, 0.0, Sense::Le, ConstraintTag::Ac(j + 1)));
    }

    let weight = 0.5 * params.bandwidth;
    LinearProgramShell {
        var_names: names("p2", n).chain(["alpha2".to_string()]).collect(),
        rows,
        objective: (0..n)
            .map(|j| PhaseTerm {
                weight,
                terms: vec![LogTerm {
                    var: j,
                    gain: params.snr2,
                }],
            })
            .collect(),
    }
}

/// Which supplement the equivalent-system program pins at zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Eq7Branch {
    /// `alpha_1 = 0`: only the relay may supplement.
    Alpha1Zero,
    /// `alpha_2 = 0`: only the source may supplement.
    Alpha2Zero,
}

/// Variable layout of the equivalent-system program:
/// `[p_{2,1}..p_{2,N}, alpha_1, alpha_2]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Eq7Layout {
    pub phases: usize,
}

impl Eq7Layout {
    pub fn alpha1(&self) -> usize {
        self.phases
    }

    pub fn alpha2(&self) -> usize {
        self.phases + 1
    }

    pub fn equivalent(&self, x: &[f64]) -> EquivalentSchedule {
        EquivalentSchedule {
            data: x[..self.phases].to_vec(),
            alpha1: x[self.alpha1()],
            alpha2: x[self.alpha2()],
        }
    }
}

/// Equivalent-system program for one branch of the `alpha_1 alpha_2 = 0`
/// complementarity. The relay's total budget is an equality row.
pub fn build_eq7(params: &SystemParams, branch: Eq7Branch) -> Result<LinearProgramShell> {
    let regime = classify_regime(params, REGIME_EPS);
    let Some(ch) = regime.equivalent else {
        return Err(Error::RegimeMismatch {
            expected: "a low-product regime (beta < gamma, beta * gamma < 1)",
            actual: regime.kind,
        });
    };
    let n = params.phases;
    let layout = Eq7Layout { phases: n };
    let (a1, a2) = (layout.alpha1(), layout.alpha2());
    let width = n + 2;
    let beta = params.harvest;
    let gp = ch.snr_ratio;
    let product = ch.harvest * ch.snr_ratio;
    let mut rows = Vec::new();

    let pinned = match branch {
        Eq7Branch::Alpha1Zero => a1,
        Eq7Branch::Alpha2Zero => a2,
    };
    let mut c = vec![0.0; width];
    c[pinned] = 1.0;
    rows.push(row(c, 0.0, Sense::Le, ConstraintTag::Nc(pinned + 1)));

    let mut c = vec![0.0; width];
    for ck in c.iter_mut().take(n) {
        *ck = 1.0;
    }
    c[a1] = -beta;
    c[a2] = 1.0;
    rows.push(row(c, params.initial2, Sense::Eq, ConstraintTag::Ec2(n)));

    for j in 0..n {
        let mut c = vec![0.0; width];
        for (k, ck) in c.iter_mut().enumerate().take(j + 1) {
            *ck = if k < j { 1.0 - product } else { 1.0 };
        }
        c[a1] = gp;
        if j > 0 {
            c[a2] = -beta * gp;
        }
        rows.push(row(
            c,
            params.initial1 * gp,
            Sense::Le,
            ConstraintTag::Ec1(j + 1),
        ));
    }

    let weight = 0.5 * params.bandwidth;
    Ok(LinearProgramShell {
        var_names: names("p2", n)
            .chain(["alpha1".to_string(), "alpha2".to_string()])
            .collect(),
        rows,
        objective: (0..n)
            .map(|j| PhaseTerm {
                weight,
                terms: vec![LogTerm {
                    var: j,
                    gain: ch.relay_snr,
                }],
            })
            .collect(),
    })
}

/// Solution of one equivalent-system branch.
#[derive(Debug, Clone, PartialEq)]
pub struct Eq7Solution {
    pub branch: Eq7Branch,
    pub point: EquivalentSchedule,
    pub diagnostics: SolverDiagnostics,
}

pub fn solve_eq7_branch(
    params: &SystemParams,
    branch: Eq7Branch,
    opts: &SolverOptions,
) -> Result<Eq7Solution> {
    let shell = build_eq7(params, branch)?;
    let (x, diagnostics) = solve_concave(&shell, opts)?;
    Ok(Eq7Solution {
        branch,
        point: Eq7Layout {
            phases: params.phases,
        }
        .equivalent(&x),
        diagnostics,
    })
}

/// Solves both complementarity branches and keeps the better feasible one.
/// Ties go to the `alpha_1 = 0` branch.
pub fn solve_eq7(params: &SystemParams, opts: &SolverOptions) -> Result<Eq7Solution> {
    let first = solve_eq7_branch(params, Eq7Branch::Alpha1Zero, opts)?;
    let second = solve_eq7_branch(params, Eq7Branch::Alpha2Zero, opts)?;
    let usable = |s: &Eq7Solution| s.diagnostics.status != SolveStatus::Infeasible;
    Ok(match (usable(&first), usable(&second)) {
        (true, true) => {
            if second.diagnostics.objective > first.diagnostics.objective {
                second
            } else {
                first
            }
        }
        (false, true) => second,
        _ => first,
    })
}
