//! Log-barrier interior-point method.
//!
//! The solve runs in three stages:
//!
//! 1. Presolve fixes variables that a row with a non-positive bound and
//!    non-negative coefficients pins at zero, and eliminates equality rows by
//!    Gauss-Jordan reduction so the remaining coordinates are free originals.
//! 2. Phase I maximizes a uniform margin `s` over the reduced inequalities. A
//!    positive margin yields a strictly interior start. A margin that collapses
//!    to zero exposes rows that hold with equality on the whole feasible set;
//!    those are promoted to equalities and the reduction is redone.
//! 3. Phase II follows the central path of the epigraph form until the
//!    duality gap `m / tau` is below a hundredth of the stationarity tolerance.
//!
//! Every step is a deterministic function of the shell, so repeated solves are
//! bit-identical.

use nalgebra::{DMatrix, DVector};

use super::{LinearProgramShell, Sense, SolveStatus, SolverDiagnostics, SolverOptions};
use crate::error::Result;

const LN2: f64 = std::f64::consts::LN_2;
/// Growth factor of `tau` between centering steps.
const MU: f64 = 20.0;
/// Newton decrement threshold (`lambda^2 / 2`) ending a centering step.
const NEWTON_TOL: f64 = 1e-11;
const MAX_NEWTON_PER_CENTER: usize = 200;
/// Phase I stops early once the margin exceeds this (rows are normalized).
const PHASE_ONE_TARGET: f64 = 1e-3;
/// Phase I margins at or below this mark a feasible set without interior.
const DEGENERATE_MARGIN: f64 = 1e-10;
/// Bounds at or below this pin variables with positive coefficients.
const PIN_BOUND: f64 = 1e-12;
const PIVOT_TOL: f64 = 1e-11;

#[derive(Debug, Clone, Copy, PartialEq)]
enum RowOrigin {
    Row(usize),
    Sign(usize),
}

/// Feasible set `{ x = origin + basis z : g z <= h }` with rows normalized to
/// unit max-abs coefficient.
struct Reduced {
    origin: DVector<f64>,
    basis: DMatrix<f64>,
    g: DMatrix<f64>,
    h: DVector<f64>,
    origins: Vec<RowOrigin>,
}

impl Reduced {
    fn dim(&self) -> usize {
        self.basis.ncols()
    }

    fn lift(&self, z: &DVector<f64>) -> Vec<f64> {
        let x = &self.origin + &self.basis * z;
        x.iter().map(|&v| if v < 0.0 { 0.0 } else { v }).collect()
    }
}

enum Presolve {
    Ok,
    Infeasible,
}

/// Repeatedly pins variables forced to zero by a single row.
fn pin_zeros(
    shell: &LinearProgramShell,
    as_eq: &[bool],
    fixed: &mut [bool],
    feas_tol: f64,
) -> Presolve {
    loop {
        let mut changed = false;
        for (i, row) in shell.rows.iter().enumerate() {
            let free: Vec<(usize, f64)> = row
                .coeffs
                .iter()
                .enumerate()
                .filter(|&(k, _)| !fixed[k])
                .map(|(k, &c)| (k, c))
                .collect();
            let has_pos = free.iter().any(|&(_, c)| c > 0.0);
            let has_neg = free.iter().any(|&(_, c)| c < 0.0);
            let eq = as_eq[i];
            // coeffs >= 0 and bound <= 0: every positive-coefficient variable is zero.
            if !has_neg && row.bound <= PIN_BOUND {
                if row.bound < -feas_tol {
                    return Presolve::Infeasible;
                }
                for &(k, c) in &free {
                    if c > 0.0 {
                        fixed[k] = true;
                        changed = true;
                    }
                }
            }
            // An equality with coeffs <= 0 and bound >= 0 pins its variables too.
            if eq && !has_pos && row.bound >= -PIN_BOUND {
                if row.bound > feas_tol {
                    return Presolve::Infeasible;
                }
                for &(k, c) in &free {
                    if c < 0.0 {
                        fixed[k] = true;
                        changed = true;
                    }
                }
            }
        }
        if !changed {
            return Presolve::Ok;
        }
    }
}

/// Eliminates equality rows and maps the remaining inequalities to the
/// reduced coordinates. Returns `None` when the equalities are inconsistent.
fn reduce(
    shell: &LinearProgramShell,
    as_eq: &[bool],
    fixed: &[bool],
    feas_tol: f64,
) -> Option<Reduced> {
    let n = shell.n_vars();
    let in_objective: Vec<bool> = (0..n)
        .map(|k| {
            shell
                .objective
                .iter()
                .any(|p| p.terms.iter().any(|t| t.var == k))
        })
        .collect();
    // Pivot on variables outside the objective first so objective arguments
    // stay single coordinates whenever possible.
    let mut order: Vec<usize> = (0..n).filter(|&k| !fixed[k] && !in_objective[k]).collect();
    order.extend((0..n).filter(|&k| !fixed[k] && in_objective[k]));

    let eq_rows: Vec<usize> = (0..shell.rows.len()).filter(|&i| as_eq[i]).collect();
    let mut e: Vec<Vec<f64>> = eq_rows
        .iter()
        .map(|&i| {
            shell.rows[i]
                .coeffs
                .iter()
                .enumerate()
                .map(|(k, &c)| if fixed[k] { 0.0 } else { c })
                .collect()
        })
        .collect();
    let mut rhs: Vec<f64> = eq_rows.iter().map(|&i| shell.rows[i].bound).collect();
    let mut used = vec![false; e.len()];
    let mut pivot_of_var: Vec<Option<usize>> = vec![None; n];

    for &col in &order {
        let mut best: Option<(usize, f64)> = None;
        for r in 0..e.len() {
            if used[r] {
                continue;
            }
            let scale = e[r].iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
            let v = e[r][col].abs() / scale;
            if v > PIVOT_TOL && best.is_none_or(|(_, b)| v > b) {
                best = Some((r, v));
            }
        }
        let Some((r, _)) = best else { continue };
        let piv = e[r][col];
        for v in e[r].iter_mut() {
            *v /= piv;
        }
        rhs[r] /= piv;
        e[r][col] = 1.0;
        for o in 0..e.len() {
            if o == r {
                continue;
            }
            let f = e[o][col];
            if f != 0.0 {
                for k in 0..n {
                    e[o][k] -= f * e[r][k];
                }
                e[o][col] = 0.0;
                rhs[o] -= f * rhs[r];
            }
        }
        used[r] = true;
        pivot_of_var[col] = Some(r);
    }
    for r in 0..e.len() {
        if !used[r] && rhs[r].abs() > feas_tol {
            return None;
        }
    }

    let coords: Vec<usize> = (0..n)
        .filter(|&k| !fixed[k] && pivot_of_var[k].is_none())
        .collect();
    let nz = coords.len();
    let mut origin = DVector::zeros(n);
    let mut basis = DMatrix::zeros(n, nz);
    for (i, &k) in coords.iter().enumerate() {
        basis[(k, i)] = 1.0;
    }
    for k in 0..n {
        if let Some(r) = pivot_of_var[k] {
            origin[k] = rhs[r];
            for (i, &c) in coords.iter().enumerate() {
                basis[(k, i)] = -e[r][c];
            }
        }
    }

    let mut g_rows: Vec<Vec<f64>> = Vec::new();
    let mut h: Vec<f64> = Vec::new();
    let mut origins = Vec::new();
    let mut push = |coeffs: &[f64], bound: f64, origin_tag: RowOrigin| -> bool {
        let x0: f64 = coeffs.iter().zip(origin.iter()).map(|(c, o)| c * o).sum();
        let mut a = vec![0.0; nz];
        for (k, &c) in coeffs.iter().enumerate() {
            if c != 0.0 {
                for (i, ai) in a.iter_mut().enumerate() {
                    *ai += c * basis[(k, i)];
                }
            }
        }
        let b = bound - x0;
        let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale <= 1e-14 {
            return b >= -feas_tol;
        }
        g_rows.push(a.iter().map(|v| v / scale).collect());
        h.push(b / scale);
        origins.push(origin_tag);
        true
    };
    for (i, row) in shell.rows.iter().enumerate() {
        if as_eq[i] {
            continue;
        }
        if !push(&row.coeffs, row.bound, RowOrigin::Row(i)) {
            return None;
        }
    }
    for k in 0..n {
        if fixed[k] {
            continue;
        }
        let mut unit = vec![0.0; n];
        unit[k] = -1.0;
        if !push(&unit, 0.0, RowOrigin::Sign(k)) {
            return None;
        }
    }
    let m = g_rows.len();
    let g = DMatrix::from_fn(m, nz, |r, c| g_rows[r][c]);
    Some(Reduced {
        origin,
        basis,
        g,
        h: DVector::from_vec(h),
        origins,
    })
}

/// How a `log2(1 + a.y + c)` term enters the barrier problem.
#[derive(Debug, Clone, Copy)]
enum LogUse {
    Objective { weight: f64 },
    Epigraph { t: usize },
}

#[derive(Debug, Clone)]
struct LogFn {
    a: DVector<f64>,
    c: f64,
    usage: LogUse,
}

impl LogFn {
    fn arg(&self, y: &DVector<f64>) -> f64 {
        1.0 + self.a.dot(y) + self.c
    }
}

/// `maximize cost.y + sum w log2(arg)` subject to `a y <= b` and
/// `y_t < log2(arg)` for epigraph terms.
struct BarrierProblem {
    a: DMatrix<f64>,
    b: DVector<f64>,
    cost: DVector<f64>,
    logs: Vec<LogFn>,
}

impl BarrierProblem {
    fn n(&self) -> usize {
        self.cost.len()
    }

    fn barrier_terms(&self) -> usize {
        self.b.len()
            + self
                .logs
                .iter()
                .filter(|l| matches!(l.usage, LogUse::Epigraph { .. }))
                .count()
    }

    /// `-tau F(y) - sum log(slacks)`, or `None` outside the domain.
    fn phi(&self, y: &DVector<f64>, tau: f64) -> Option<f64> {
        let slack = &self.b - &self.a * y;
        let mut barrier = 0.0;
        for &s in slack.iter() {
            if s <= 0.0 || !s.is_finite() {
                return None;
            }
            barrier -= s.ln();
        }
        let mut f = self.cost.dot(y);
        for l in &self.logs {
            let arg = l.arg(y);
            if arg <= 0.0 || !arg.is_finite() {
                return None;
            }
            let value = arg.log2();
            match l.usage {
                LogUse::Objective { weight } => f += weight * value,
                LogUse::Epigraph { t } => {
                    let u = value - y[t];
                    if u <= 0.0 {
                        return None;
                    }
                    barrier -= u.ln();
                }
            }
        }
        Some(-tau * f + barrier)
    }

    /// Gradient of `phi` and a factor `M` with `M^T M` equal to its Hessian.
    /// Every curvature term is a non-negative multiple of an outer product,
    /// so `M` stacks the scaled vectors.
    fn grad_hess(&self, y: &DVector<f64>, tau: f64) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.n();
        let mut grad = -tau * &self.cost;
        let mut rows: Vec<DVector<f64>> = Vec::new();
        let slack = &self.b - &self.a * y;
        for (r, &s) in slack.iter().enumerate() {
            let row = self.a.row(r).transpose();
            grad.axpy(1.0 / s, &row, 1.0);
            rows.push(row / s);
        }
        for l in &self.logs {
            let arg = l.arg(y);
            // d log2(arg) = a / (ln2 arg); d2 = -a a^T / (ln2 arg^2)
            let dl = 1.0 / (LN2 * arg);
            let d2l = 1.0 / (LN2 * arg * arg);
            match l.usage {
                LogUse::Objective { weight } => {
                    grad.axpy(-tau * weight * dl, &l.a, 1.0);
                    rows.push(&l.a * (tau * weight * d2l).sqrt());
                }
                LogUse::Epigraph { t } => {
                    let u = arg.log2() - y[t];
                    let mut du = &l.a * dl;
                    du[t] -= 1.0;
                    grad.axpy(-1.0 / u, &du, 1.0);
                    rows.push(du / u);
                    rows.push(&l.a * (d2l / u).sqrt());
                }
            }
        }
        let factor = DMatrix::from_fn(rows.len(), n, |r, c| rows[r][c]);
        (grad, factor)
    }
}

/// Solves `M^T M d = -g` through a QR factorization of the column-scaled
/// factor, which avoids squaring its condition number.
fn newton_direction(factor: DMatrix<f64>, grad: &DVector<f64>) -> Option<DVector<f64>> {
    let n = factor.ncols();
    let scale: DVector<f64> = DVector::from_fn(n, |c, _| {
        let norm = factor.column(c).norm();
        if norm > 0.0 && norm.is_finite() {
            1.0 / norm
        } else {
            1.0
        }
    });
    let rhs = -grad.component_mul(&scale);
    let mut ridge = 0.0;
    for _ in 0..12 {
        let m = factor.nrows();
        let extra = if ridge > 0.0 { n } else { 0 };
        let stacked = DMatrix::from_fn(m + extra, n, |r, c| {
            if r < m {
                factor[(r, c)] * scale[c]
            } else if r - m == c {
                ridge
            } else {
                0.0
            }
        });
        let r = stacked.qr().r();
        let diag_max = r.diagonal().amax();
        let well_posed = r.nrows() == n && r.diagonal().iter().all(|v| v.abs() > 1e-15 * diag_max);
        if well_posed {
            let z = r.tr_solve_upper_triangular(&rhs);
            if let Some(z) = z {
                if let Some(d) = r.solve_upper_triangular(&z) {
                    let d = d.component_mul(&scale);
                    if d.iter().all(|v| v.is_finite()) {
                        return Some(d);
                    }
                }
            }
        }
        ridge = if ridge == 0.0 { 1e-10 } else { ridge * 100.0 };
    }
    None
}

struct BarrierRun {
    y: DVector<f64>,
    iterations: usize,
    hit_limit: bool,
    residual: f64,
}

/// Suboptimality bound `(m + sqrt(m) lambda) / tau` of an approximately
/// centered point, `lambda` being the Newton decrement.
fn gap_bound(p: &BarrierProblem, y: &DVector<f64>, tau: f64, m: f64) -> f64 {
    let (grad, hess) = p.grad_hess(y, tau);
    let lambda = newton_direction(hess, &grad)
        .map(|d| (-grad.dot(&d)).max(0.0).sqrt())
        .unwrap_or(f64::INFINITY);
    (m + m.sqrt() * lambda) / tau
}

/// Follows the central path from the strictly feasible `y`.
fn follow_path(
    p: &BarrierProblem,
    mut y: DVector<f64>,
    tau0: f64,
    gap_tol: f64,
    max_iter: usize,
    stop: impl Fn(&DVector<f64>) -> bool,
) -> BarrierRun {
    let m = p.barrier_terms().max(1) as f64;
    let mut tau = tau0;
    let mut iterations = 0;
    let mut residual;
    loop {
        let mut centered_grad = f64::INFINITY;
        for _ in 0..MAX_NEWTON_PER_CENTER {
            if iterations >= max_iter {
                return BarrierRun {
                    y,
                    iterations,
                    hit_limit: true,
                    residual: centered_grad,
                };
            }
            iterations += 1;
            let (grad, hess) = p.grad_hess(&y, tau);
            centered_grad = grad.amax() / tau;
            let Some(dir) = newton_direction(hess, &grad) else {
                break;
            };
            let decrement = -grad.dot(&dir);
            if decrement / 2.0 <= NEWTON_TOL {
                break;
            }
            let Some(phi0) = p.phi(&y, tau) else { break };
            let mut step = 1.0;
            let mut accepted = None;
            while step > 1e-14 {
                let cand = &y + &dir * step;
                if let Some(phi) = p.phi(&cand, tau) {
                    let allowance = 1e-13 * phi0.abs().max(1.0);
                    if phi <= phi0 - 0.25 * step * decrement + allowance {
                        accepted = Some(cand);
                        break;
                    }
                }
                step *= 0.5;
            }
            match accepted {
                Some(cand) => y = cand,
                None => break,
            }
            if stop(&y) {
                return BarrierRun {
                    y,
                    iterations,
                    hit_limit: false,
                    residual: centered_grad,
                };
            }
        }
        residual = gap_bound(p, &y, tau, m);
        if stop(&y) || m / tau <= gap_tol {
            break;
        }
        tau *= MU;
    }
    BarrierRun {
        y,
        iterations,
        hit_limit: false,
        residual,
    }
}

/// Maximizes a uniform margin `s <= 1` with `g z + s <= h`.
fn phase_one(red: &Reduced, max_iter: usize) -> (DVector<f64>, f64, BarrierRun) {
    let nz = red.dim();
    let m = red.h.len();
    let mut a = DMatrix::zeros(m + 1, nz + 1);
    a.view_mut((0, 0), (m, nz)).copy_from(&red.g);
    for r in 0..m {
        a[(r, nz)] = 1.0;
    }
    a[(m, nz)] = 1.0;
    let mut b = DVector::zeros(m + 1);
    b.rows_mut(0, m).copy_from(&red.h);
    b[m] = 1.0;
    let mut cost = DVector::zeros(nz + 1);
    cost[nz] = 1.0;
    let problem = BarrierProblem {
        a,
        b,
        cost,
        logs: Vec::new(),
    };
    let min_h = red.h.iter().copied().fold(f64::INFINITY, f64::min);
    let mut y0 = DVector::zeros(nz + 1);
    y0[nz] = (min_h - 1.0).min(0.5);
    let run = follow_path(&problem, y0, 1.0, 1e-13, max_iter, |y| {
        y[nz] >= PHASE_ONE_TARGET
    });
    let z = run.y.rows(0, nz).into_owned();
    let margin = run.y[nz];
    (z, margin, run)
}

fn phase_two_problem(shell: &LinearProgramShell, red: &Reduced) -> (BarrierProblem, Vec<usize>) {
    let nz = red.dim();
    let epi_phases: Vec<usize> = (0..shell.objective.len())
        .filter(|&j| shell.objective[j].terms.len() > 1)
        .collect();
    let n = nz + epi_phases.len();
    let mut a = DMatrix::zeros(red.g.nrows(), n);
    a.view_mut((0, 0), (red.g.nrows(), nz)).copy_from(&red.g);
    let mut cost = DVector::zeros(n);
    let mut logs = Vec::new();
    let mut t_index = nz;
    for phase in &shell.objective {
        let epigraph = phase.terms.len() > 1;
        if epigraph {
            cost[t_index] = phase.weight;
        }
        for term in &phase.terms {
            let mut coeffs = DVector::zeros(n);
            for i in 0..nz {
                coeffs[i] = term.gain * red.basis[(term.var, i)];
            }
            let usage = if epigraph {
                LogUse::Epigraph { t: t_index }
            } else {
                LogUse::Objective {
                    weight: phase.weight,
                }
            };
            logs.push(LogFn {
                a: coeffs,
                c: term.gain * red.origin[term.var],
                usage,
            });
        }
        if epigraph {
            t_index += 1;
        }
    }
    (
        BarrierProblem {
            a,
            b: red.h.clone(),
            cost,
            logs,
        },
        epi_phases,
    )
}

fn finish(
    shell: &LinearProgramShell,
    x: Vec<f64>,
    iterations: usize,
    residual: f64,
    status: Option<SolveStatus>,
    opts: &SolverOptions,
) -> (Vec<f64>, SolverDiagnostics) {
    let objective = shell.objective_value(&x);
    let max_violation = shell.max_violation(&x);
    let status = status.unwrap_or(
        if max_violation <= opts.feas_tol && residual <= opts.stat_tol {
            SolveStatus::Converged
        } else {
            SolveStatus::IterationLimit
        },
    );
    (
        x,
        SolverDiagnostics {
            iterations,
            objective,
            max_violation,
            stationarity_residual: residual,
            status,
        },
    )
}

/// Maximizes the shell's objective over its feasible region.
///
/// Returns an error only for malformed shells. Infeasibility and iteration
/// limits are reported through [`SolverDiagnostics::status`].
pub fn solve_concave(
    shell: &LinearProgramShell,
    opts: &SolverOptions,
) -> Result<(Vec<f64>, SolverDiagnostics)> {
    shell.validate()?;
    let n = shell.n_vars();
    let mut fixed = vec![false; n];
    let mut as_eq: Vec<bool> = shell.rows.iter().map(|r| r.sense == Sense::Eq).collect();
    let mut iterations = 0;
    let infeasible = |iterations| {
        finish(
            shell,
            vec![0.0; n],
            iterations,
            f64::INFINITY,
            Some(SolveStatus::Infeasible),
            opts,
        )
    };

    // Each pass either succeeds or promotes at least one row or sign constraint.
    for _ in 0..=(n + shell.rows.len()) {
        if let Presolve::Infeasible = pin_zeros(shell, &as_eq, &mut fixed, opts.feas_tol) {
            return Ok(infeasible(iterations));
        }
        let Some(red) = reduce(shell, &as_eq, &fixed, opts.feas_tol) else {
            return Ok(infeasible(iterations));
        };
        if red.dim() == 0 {
            let x = red.lift(&DVector::zeros(0));
            return Ok(finish(shell, x, iterations, 0.0, None, opts));
        }

        let budget = opts.max_iter.saturating_sub(iterations);
        let (z0, margin, run) = phase_one(&red, budget);
        iterations += run.iterations;
        if run.hit_limit {
            let x = red.lift(&z0);
            return Ok(finish(
                shell,
                x,
                iterations,
                f64::INFINITY,
                Some(SolveStatus::IterationLimit),
                opts,
            ));
        }
        if margin < -opts.feas_tol {
            return Ok(infeasible(iterations));
        }
        if margin <= DEGENERATE_MARGIN {
            let slack = &red.h - &red.g * &z0;
            let cutoff = 1e-7 + 10.0 * margin.abs();
            let mut promoted = false;
            for (r, &s) in slack.iter().enumerate() {
                if s <= cutoff {
                    match red.origins[r] {
                        RowOrigin::Row(i) => as_eq[i] = true,
                        RowOrigin::Sign(k) => fixed[k] = true,
                    }
                    promoted = true;
                }
            }
            if !promoted {
                return Ok(infeasible(iterations));
            }
            continue;
        }

        let (problem, _) = phase_two_problem(shell, &red);
        let nz = red.dim();
        let mut y0 = DVector::zeros(problem.n());
        y0.rows_mut(0, nz).copy_from(&z0);
        // Epigraph starts sit strictly below every candidate in their phase.
        let mut start = vec![f64::INFINITY; problem.n() - nz];
        for l in &problem.logs {
            if let LogUse::Epigraph { t } = l.usage {
                let v = l.arg(&y0).log2() - 1.0;
                start[t - nz] = start[t - nz].min(v);
            }
        }
        for (i, v) in start.into_iter().enumerate() {
            y0[nz + i] = v;
        }
        let budget = opts.max_iter.saturating_sub(iterations);
        let run = follow_path(&problem, y0, 1.0, 0.01 * opts.stat_tol, budget, |_| false);
        iterations += run.iterations;
        let z = run.y.rows(0, nz).into_owned();
        let x = red.lift(&z);
        let status = run.hit_limit.then_some(SolveStatus::IterationLimit);
        return Ok(finish(shell, x, iterations, run.residual, status, opts));
    }
    Ok(infeasible(iterations))
}
