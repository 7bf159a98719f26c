//! Reference solver for concave "sum of min-of-log" programs over polyhedra.
//!
//! A [`LinearProgramShell`] holds linear rows over non-negative variables and an
//! objective made of per-phase terms `w * min_i log2(1 + g_i * x_{k_i})`. Phases
//! with more than one candidate are handled through epigraph variables
//! `t_j <= log2(1 + g * x)`, which leaves a smooth problem with a linear
//! objective in `t`. The solve itself is a log-barrier interior-point method
//! (see [`barrier`]).

mod barrier;
pub mod programs;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use barrier::solve_concave;
pub use programs::{
    build_energy_program, build_eq1, build_eq2, build_eq5, build_eq7, solve_eq7, solve_eq7_branch,
    Eq5Layout, Eq7Branch, Eq7Layout, Eq7Solution,
};

/// Names the model constraint a row stands for. Phase and variable indices are 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConstraintTag {
    /// Energy causality at the source in phase `j`.
    Ec1(usize),
    /// Energy causality at the relay in phase `j`.
    Ec2(usize),
    /// Feasibility of the greedy source in phase `j`.
    Ac(usize),
    /// Sign constraint on variable `k`.
    Nc(usize),
}

impl fmt::Display for ConstraintTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Ec1(j) => write!(f, "EC_1,{j}"),
            Self::Ec2(j) => write!(f, "EC_2,{j}"),
            Self::Ac(j) => write!(f, "AC_{j}"),
            Self::Nc(k) => write!(f, "NC_{k}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Eq,
}

/// `coeffs . x (<= | =) bound`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintRow {
    pub coeffs: Vec<f64>,
    pub bound: f64,
    pub sense: Sense,
    pub tag: ConstraintTag,
}

impl ConstraintRow {
    pub fn value(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// `bound - coeffs . x`; negative means violated.
    pub fn slack(&self, x: &[f64]) -> f64 {
        self.bound - self.value(x)
    }

    pub fn violation(&self, x: &[f64]) -> f64 {
        let s = self.slack(x);
        match self.sense {
            Sense::Le => (-s).max(0.0),
            Sense::Eq => s.abs(),
        }
    }
}

/// `log2(1 + gain * x[var])`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogTerm {
    pub var: usize,
    pub gain: f64,
}

/// `weight * min over terms`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseTerm {
    pub weight: f64,
    pub terms: Vec<LogTerm>,
}

impl PhaseTerm {
    pub fn value(&self, x: &[f64]) -> f64 {
        let inner = self
            .terms
            .iter()
            .map(|t| (1.0 + t.gain * x[t.var]).log2())
            .fold(f64::INFINITY, f64::min);
        self.weight * inner
    }
}

/// Canonical form shared by every program in the crate. All variables are
/// implicitly non-negative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearProgramShell {
    pub var_names: Vec<String>,
    pub rows: Vec<ConstraintRow>,
    pub objective: Vec<PhaseTerm>,
}

impl LinearProgramShell {
    pub fn n_vars(&self) -> usize {
        self.var_names.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_vars();
        for (i, row) in self.rows.iter().enumerate() {
            if row.coeffs.len() != n {
                return Err(Error::InvalidProgram(format!(
                    "row {i} ({}) has {} coefficients for {n} variables",
                    row.tag,
                    row.coeffs.len()
                )));
            }
            if !row.bound.is_finite() || row.coeffs.iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidProgram(format!(
                    "row {i} ({}) has non-finite data",
                    row.tag
                )));
            }
        }
        for (j, phase) in self.objective.iter().enumerate() {
            if phase.terms.is_empty() {
                return Err(Error::InvalidProgram(format!(
                    "objective phase {j} is empty"
                )));
            }
            if !(phase.weight.is_finite() && phase.weight > 0.0) {
                return Err(Error::InvalidProgram(format!(
                    "objective phase {j} has weight {}",
                    phase.weight
                )));
            }
            for t in &phase.terms {
                if t.var >= n {
                    return Err(Error::InvalidProgram(format!(
                        "objective phase {j} references variable {} of {n}",
                        t.var
                    )));
                }
                if !(t.gain.is_finite() && t.gain >= 0.0) {
                    return Err(Error::InvalidProgram(format!(
                        "objective phase {j} has gain {}",
                        t.gain
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().map(|p| p.value(x)).sum()
    }

    /// Largest violation over all rows and sign constraints.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let rows = self.rows.iter().map(|r| r.violation(x)).fold(0.0, f64::max);
        let signs = x.iter().map(|v| (-v).max(0.0)).fold(0.0, f64::max);
        rows.max(signs)
    }

    pub fn rows_tagged(&self, tag: ConstraintTag) -> impl Iterator<Item = &ConstraintRow> {
        self.rows.iter().filter(move |r| r.tag == tag)
    }

    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.var_names.iter().position(|v| v == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Converged,
    IterationLimit,
    Infeasible,
}

impl SolveStatus {
    pub fn label(self) -> &'static str {
        match self {
            Self::Converged => "converged",
            Self::IterationLimit => "iteration_limit",
            Self::Infeasible => "infeasible",
        }
    }
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    /// Newton steps across both phases of the interior-point method.
    pub iterations: usize,
    pub objective: f64,
    pub max_violation: f64,
    /// Duality-gap bound `(m + sqrt(m) lambda) / tau` at the returned point,
    /// `lambda` being the Newton decrement of the final centering problem.
    pub stationarity_residual: f64,
    pub status: SolveStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub feas_tol: f64,
    pub stat_tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            feas_tol: 1e-9,
            stat_tol: 1e-8,
            max_iter: 100_000,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_var() -> LinearProgramShell {
        LinearProgramShell {
            var_names: vec!["x".into()],
            rows: vec![ConstraintRow {
                coeffs: vec![1.0],
                bound: 1.0,
                sense: Sense::Le,
                tag: ConstraintTag::Ec1(1),
            }],
            objective: vec![PhaseTerm {
                weight: 1.0,
                terms: vec![LogTerm { var: 0, gain: 1.0 }],
            }],
        }
    }

    #[test]
    fn single_variable_saturates() {
        let (x, d) = solve_concave(&one_var(), &SolverOptions::default()).unwrap();
        assert_eq!(d.status, SolveStatus::Converged);
        assert!((x[0] - 1.0).abs() < 1e-9, "{x:?}");
        assert!((d.objective - 1.0).abs() < 1e-9);
        assert!(d.max_violation <= 1e-9);
        assert!(d.stationarity_residual <= 1e-8);
    }

    #[test]
    fn validate_rejects_bad_shell() {
        let mut s = one_var();
        s.rows[0].coeffs.push(1.0);
        assert!(s.validate().is_err());
        let mut s = one_var();
        s.objective[0].terms[0].var = 3;
        assert!(s.validate().is_err());
        let mut s = one_var();
        s.rows[0].bound = f64::NAN;
        assert!(solve_concave(&s, &SolverOptions::default()).is_err());
    }

    #[test]
    fn infeasible_rows_reported() {
        let mut s = one_var();
        s.rows[0].bound = -1.0;
        let (_, d) = solve_concave(&s, &SolverOptions::default()).unwrap();
        assert_eq!(d.status, SolveStatus::Infeasible);

        // x + y = 1 with x - y >= 2 (written -x + y <= -2) and both non-negative
        // can be satisfied; adding x <= 0.5 cannot.
        let s = LinearProgramShell {
            var_names: vec!["x".into(), "y".into()],
            rows: vec![
                ConstraintRow {
                    coeffs: vec![1.0, 1.0],
                    bound: 1.0,
                    sense: Sense::Eq,
                    tag: ConstraintTag::Ec2(1),
                },
                ConstraintRow {
                    coeffs: vec![1.0, 0.0],
                    bound: 0.5,
                    sense: Sense::Le,
                    tag: ConstraintTag::Ec1(1),
                },
                ConstraintRow {
                    coeffs: vec![-1.0, 1.0],
                    bound: -0.5,
                    sense: Sense::Le,
                    tag: ConstraintTag::Ec1(2),
                },
            ],
            objective: vec![PhaseTerm {
                weight: 1.0,
                terms: vec![LogTerm { var: 1, gain: 1.0 }],
            }],
        };
        let (_, d) = solve_concave(&s, &SolverOptions::default()).unwrap();
        assert_eq!(d.status, SolveStatus::Infeasible);
    }

    #[test]
    fn equality_and_min_terms() {
        // max min(log2(1+x), log2(1+2y)) s.t. x + y = 3 -> x = 2y -> y = 1
        let s = LinearProgramShell {
            var_names: vec!["x".into(), "y".into()],
            rows: vec![ConstraintRow {
                coeffs: vec![1.0, 1.0],
                bound: 3.0,
                sense: Sense::Eq,
                tag: ConstraintTag::Ec2(1),
            }],
            objective: vec![PhaseTerm {
                weight: 0.5,
                terms: vec![LogTerm { var: 0, gain: 1.0 }, LogTerm { var: 1, gain: 2.0 }],
            }],
        };
        let (x, d) = solve_concave(&s, &SolverOptions::default()).unwrap();
        assert_eq!(d.status, SolveStatus::Converged);
        assert!(
            (x[0] - 2.0).abs() < 1e-8 && (x[1] - 1.0).abs() < 1e-8,
            "{x:?}"
        );
        assert!((d.objective - 0.5 * 3f64.log2()).abs() < 1e-9);
    }

    #[test]
    fn thin_feasible_set_is_presolved() {
        // x <= 0 forces x = 0; y <= 2 x + 1 keeps y <= 1.
        let s = LinearProgramShell {
            var_names: vec!["x".into(), "y".into()],
            rows: vec![
                ConstraintRow {
                    coeffs: vec![1.0, 0.0],
                    bound: 0.0,
                    sense: Sense::Le,
                    tag: ConstraintTag::Ec1(1),
                },
                ConstraintRow {
                    coeffs: vec![-2.0, 1.0],
                    bound: 1.0,
                    sense: Sense::Le,
                    tag: ConstraintTag::Ec2(1),
                },
            ],
            objective: vec![
                PhaseTerm {
                    weight: 1.0,
                    terms: vec![LogTerm { var: 0, gain: 1.0 }],
                },
                PhaseTerm {
                    weight: 1.0,
                    terms: vec![LogTerm { var: 1, gain: 1.0 }],
                },
            ],
        };
        let (x, d) = solve_concave(&s, &SolverOptions::default()).unwrap();
        assert_eq!(d.status, SolveStatus::Converged);
        assert_eq!(x[0], 0.0);
        assert!((x[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn implicit_equalities_are_detected() {
        // x - y <= 0 and y - x <= 0 pin x = y without any explicit equality.
        let s = LinearProgramShell {
            var_names: vec!["x".into(), "y".into()],
            rows: vec![
                ConstraintRow {
                    coeffs: vec![1.0, -1.0],
                    bound: 0.0,
                    sense: Sense::Le,
                    tag: ConstraintTag::Ac(1),
                },
                ConstraintRow {
                    coeffs: vec![-1.0, 1.0],
                    bound: 0.0,
                    sense: Sense::Le,
                    tag: ConstraintTag::Ac(2),
                },
                ConstraintRow {
                    coeffs: vec![1.0, 1.0],
                    bound: 2.0,
                    sense: Sense::Le,
                    tag: ConstraintTag::Ec1(1),
                },
            ],
            objective: vec![PhaseTerm {
                weight: 1.0,
                terms: vec![LogTerm { var: 0, gain: 1.0 }, LogTerm { var: 1, gain: 3.0 }],
            }],
        };
        let (x, d) = solve_concave(&s, &SolverOptions::default()).unwrap();
        assert_eq!(d.status, SolveStatus::Converged, "{d:?}");
        assert!(
            (x[0] - 1.0).abs() < 1e-8 && (x[1] - 1.0).abs() < 1e-8,
            "{x:?}"
        );
    }

    #[test]
    fn tags_display() {
        assert_eq!(ConstraintTag::Ec1(2).to_string(), "EC_1,2");
        assert_eq!(ConstraintTag::Ac(3).to_string(), "AC_3");
    }
}
