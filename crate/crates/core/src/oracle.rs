//! Brute-force grid search over the physical powers, used as ground truth on
//! small instances.
//!
//! Variables are visited phase by phase (`P_{1,1}, P_{2,1}, P_{1,2}, ...`).
//! Each causality slack only shrinks as the variable just chosen grows, so a
//! depth-first walk can stop an axis at its first infeasible value. Slacks are
//! accumulated exactly as [`check_feasibility_with`] does, so every returned
//! point passes that check with zero tolerance.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{check_feasibility_with, throughput, Harvesting, PowerSchedule, SystemParams};
use crate::report::SolveReport;

const LN2: f64 = std::f64::consts::LN_2;
/// Largest number of grid points a single round may span.
pub const MAX_GRID_POINTS: f64 = 1e12;
/// Slack granted to candidates in [`certify`].
pub const CERTIFY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Points per axis, at least 2.
    pub resolution: usize,
    /// Refinement rounds after the initial full-box pass.
    pub rounds: usize,
    /// Upper bound of every axis; defaults to [`energy_cap`].
    pub cap: Option<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            resolution: 41,
            rounds: 3,
            cap: None,
        }
    }
}

impl GridSpec {
    pub fn new(resolution: usize, rounds: usize) -> Self {
        Self {
            resolution,
            rounds,
            cap: None,
        }
    }
}

/// Bound on any single transmit power. Each transfer multiplies the energy in
/// the system by at most `max(1, beta)`, and a phase has two transfers.
pub fn energy_cap(params: &SystemParams) -> f64 {
    let n = params.phases as f64;
    let beta = params.harvest;
    if beta <= 1.0 {
        params.initial1 + params.initial2 * n
    } else {
        (params.initial1 + params.initial2) * beta.powf(2.0 * n)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub schedule: PowerSchedule,
    pub throughput: f64,
    /// Lipschitz bound on how far the first-round grid optimum can sit below
    /// the true optimum.
    pub grid_gap: f64,
    /// Best throughput after each round, the first being the full-box pass.
    pub history: Vec<f64>,
}

/// Axis values and the per-phase rate of every value.
struct Axis {
    values: Vec<f64>,
    rates: Vec<f64>,
}

impl Axis {
    fn new(lo: f64, hi: f64, resolution: usize, snr: f64) -> Self {
        let step = (hi - lo) / (resolution - 1) as f64;
        let values: Vec<f64> = (0..resolution)
            .map(|i| {
                if i + 1 == resolution {
                    hi
                } else {
                    lo + step * i as f64
                }
            })
            .collect();
        let rates = values.iter().map(|v| (1.0 + v * snr).log2()).collect();
        Self { values, rates }
    }

    fn max_rate(&self) -> f64 {
        self.rates.last().copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, Copy)]
struct Ledger {
    spent1: f64,
    spent2: f64,
}

#[derive(Debug, Clone, PartialEq)]
struct Best {
    score: f64,
    picks: Vec<f64>,
}

impl Best {
    /// Higher score wins; ties go to the lexicographically smaller point.
    fn better_than(&self, other: &Best) -> bool {
        if self.score != other.score {
            return self.score > other.score;
        }
        self.picks
            .iter()
            .zip(&other.picks)
            .find(|(a, b)| a != b)
            .is_some_and(|(a, b)| a < b)
    }

    fn pick(a: Option<Best>, b: Option<Best>) -> Option<Best> {
        match (a, b) {
            (Some(a), Some(b)) => Some(if b.better_than(&a) { b } else { a }),
            (a, None) => a,
            (None, b) => b,
        }
    }
}

struct Search<'a> {
    params: &'a SystemParams,
    harvesting: Harvesting,
    /// Axes in visiting order: source then relay for each phase.
    axes: Vec<Axis>,
    /// Upper bound on the rate still attainable from phase `j` on.
    tail: Vec<f64>,
}

impl Search<'_> {
    fn slack1(&self, led: &Ledger, relay_before: f64) -> f64 {
        let p = self.params;
        match self.harvesting {
            Harvesting::Mutual | Harvesting::SourceOnly => {
                p.initial1 + p.harvest * relay_before - led.spent1
            }
            Harvesting::RelayOnly => p.initial1 + p.initial2 - led.spent1,
        }
    }

    fn slack2(&self, led: &Ledger) -> f64 {
        let p = self.params;
        match self.harvesting {
            Harvesting::Mutual => p.initial2 + p.harvest * led.spent1 - led.spent2,
            Harvesting::SourceOnly => p.initial2 - led.spent2,
            Harvesting::RelayOnly => p.harvest * led.spent1 - led.spent2,
        }
    }

    /// Walks phase `j` onward from the given ledger.
    fn walk(
        &self,
        j: usize,
        led: Ledger,
        score: f64,
        picks: &mut Vec<usize>,
        best: &mut Option<Best>,
    ) {
        let n = self.params.phases;
        if j == n {
            if best.as_ref().is_some_and(|b| score < b.score) {
                return;
            }
            let cand = Best {
                score,
                picks: self.point(picks),
            };
            if best.as_ref().is_none_or(|b| cand.better_than(b)) {
                *best = Some(cand);
            }
            return;
        }
        if let Some(b) = best {
            if score + self.tail[j] < b.score {
                return;
            }
        }
        let (ax1, ax2) = (&self.axes[2 * j], &self.axes[2 * j + 1]);
        for i1 in 0..ax1.values.len() {
            let relay_before = led.spent2;
            let mid = Ledger {
                spent1: led.spent1 + ax1.values[i1],
                spent2: led.spent2,
            };
            if self.slack1(&mid, relay_before) < 0.0 {
                break;
            }
            picks.push(i1);
            for i2 in 0..ax2.values.len() {
                let next = Ledger {
                    spent1: mid.spent1,
                    spent2: mid.spent2 + ax2.values[i2],
                };
                if self.slack2(&next) < 0.0 {
                    break;
                }
                picks.push(i2);
                let rate = ax1.rates[i1].min(ax2.rates[i2]);
                self.walk(j + 1, next, score + rate, picks, best);
                picks.pop();
            }
            picks.pop();
        }
    }

    fn point(&self, picks: &[usize]) -> Vec<f64> {
        picks
            .iter()
            .zip(&self.axes)
            .map(|(&i, ax)| ax.values[i])
            .collect()
    }

    fn run(&self) -> Option<Best> {
        let first = &self.axes[0];
        (0..first.values.len())
            .into_par_iter()
            .map(|i1| {
                let led = Ledger {
                    spent1: first.values[i1],
                    spent2: 0.0,
                };
                if self.slack1(&led, 0.0) < 0.0 {
                    return None;
                }
                let ax2 = &self.axes[1];
                let mut best = None;
                let mut picks = vec![i1];
                for i2 in 0..ax2.values.len() {
                    let next = Ledger {
                        spent1: led.spent1,
                        spent2: ax2.values[i2],
                    };
                    if self.slack2(&next) < 0.0 {
                        break;
                    }
                    picks.push(i2);
                    let rate = first.rates[i1].min(ax2.rates[i2]);
                    self.walk(1, next, rate, &mut picks, &mut best);
                    picks.pop();
                }
                best
            })
            .reduce(|| None, Best::pick)
    }
}

fn to_schedule(point: &[f64]) -> PowerSchedule {
    PowerSchedule {
        source: point.iter().step_by(2).copied().collect(),
        relay: point.iter().skip(1).step_by(2).copied().collect(),
    }
}

/// Grid search over the general program.
pub fn grid_search(params: &SystemParams, spec: &GridSpec) -> Result<GridResult> {
    grid_search_with(params, Harvesting::Mutual, spec)
}

/// Grid search under the given harvesting model.
pub fn grid_search_with(
    params: &SystemParams,
    harvesting: Harvesting,
    spec: &GridSpec,
) -> Result<GridResult> {
    params.validate()?;
    if spec.resolution < 2 {
        return Err(Error::Grid(format!(
            "resolution must be at least 2, got {}",
            spec.resolution
        )));
    }
    let cap = spec.cap.unwrap_or_else(|| energy_cap(params));
    if !(cap.is_finite() && cap >= 0.0) {
        return Err(Error::Grid(format!(
            "axis bound {cap} is not a finite non-negative value"
        )));
    }
    let dims = 2 * params.phases;
    let points = (spec.resolution as f64).powi(dims as i32);
    if points > MAX_GRID_POINTS {
        return Err(Error::Grid(format!(
            "{points:e} grid points exceed the limit of {MAX_GRID_POINTS:e}"
        )));
    }
    let snr = |k: usize| if k % 2 == 0 { params.snr1 } else { params.snr2 };
    let weight = 0.5 * params.bandwidth;
    let step0 = cap / (spec.resolution - 1) as f64;
    let lipschitz = weight * params.snr1.max(params.snr2) / LN2;
    let grid_gap = lipschitz * dims as f64 * step0 / 2.0;

    let mut boxes: Vec<(f64, f64)> = vec![(0.0, cap); dims];
    let mut incumbent: Option<Best> = None;
    let mut history = Vec::with_capacity(spec.rounds + 1);
    for _ in 0..=spec.rounds {
        let axes: Vec<Axis> = boxes
            .iter()
            .enumerate()
            .map(|(k, &(lo, hi))| Axis::new(lo, hi, spec.resolution, snr(k)))
            .collect();
        let mut tail = vec![0.0; params.phases + 1];
        for j in (0..params.phases).rev() {
            tail[j] = tail[j + 1] + axes[2 * j].max_rate().min(axes[2 * j + 1].max_rate());
        }
        let search = Search {
            params,
            harvesting,
            axes,
            tail,
        };
        let found = search.run();
        incumbent = Best::pick(incumbent, found);
        let Some(best) = incumbent.as_ref() else {
            return Err(Error::Grid("no feasible grid point".into()));
        };
        history.push(weight * best.score);
        boxes = boxes
            .iter()
            .zip(&best.picks)
            .map(|(&(lo, hi), &x)| {
                let h = 2.0 * (hi - lo) / (spec.resolution - 1) as f64;
                ((x - h).max(0.0), (x + h).min(cap))
            })
            .collect();
    }
    let best = incumbent.expect("the zero point is always feasible");
    let schedule = to_schedule(&best.picks);
    debug_assert!(check_feasibility_with(params, harvesting, &schedule, 0.0)?.feasible);
    let value = throughput(params, &schedule)?;
    Ok(GridResult {
        schedule,
        throughput: value,
        grid_gap,
        history,
    })
}

/// Whether `candidate` reaches the grid optimum of its own harvesting model.
pub fn certify(params: &SystemParams, candidate: &SolveReport, spec: &GridSpec) -> Result<bool> {
    let grid = grid_search_with(params, candidate.algorithm.harvesting(), spec)?;
    Ok(candidate.throughput >= grid.throughput - CERTIFY_TOL)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::check_feasibility;

    fn params(n: usize, g1: f64, g2: f64, beta: f64, p10: f64, p20: f64) -> SystemParams {
        SystemParams::new(1.0, n, g1, g2, beta, p10, p20).unwrap()
    }

    #[test]
    fn corner_optimum_is_on_grid() {
        let p = params(1, 1.0, 1.0, 0.0, 1.0, 1.0);
        let r = grid_search(&p, &GridSpec::new(101, 0)).unwrap();
        assert_eq!(r.throughput, 0.5);
        assert_eq!(r.schedule.source, vec![1.0]);
        assert_eq!(r.schedule.relay, vec![1.0]);
    }

    #[test]
    fn zero_budgets_give_zero() {
        let p = params(2, 2.0, 1.0, 0.5, 0.0, 0.0);
        let r = grid_search(&p, &GridSpec::default()).unwrap();
        assert_eq!(r.throughput, 0.0);
        assert_eq!(r.schedule, PowerSchedule::zeros(2));
    }

    #[test]
    fn refinement_is_monotone_and_feasible() {
        let p = params(2, 2.0, 1.0, 0.4, 1.0, 1.0);
        let r = grid_search(&p, &GridSpec::default()).unwrap();
        assert!(r.history.windows(2).all(|w| w[1] >= w[0]));
        assert!(check_feasibility(&p, &r.schedule, 0.0).unwrap().feasible);
        assert!((r.throughput - 0.8217632).abs() < 1e-3);
    }

    #[test]
    fn rejects_bad_specs() {
        let p = params(2, 2.0, 1.0, 0.4, 1.0, 1.0);
        assert!(matches!(
            grid_search(&p, &GridSpec::new(1, 0)),
            Err(Error::Grid(_))
        ));
        let big = params(8, 2.0, 1.0, 0.4, 1.0, 1.0);
        assert!(matches!(
            grid_search(&big, &GridSpec::new(41, 0)),
            Err(Error::Grid(_))
        ));
    }

    #[test]
    fn deterministic_across_pools() {
        let p = params(2, 1.5, 1.0, 0.3, 0.8, 0.6);
        let spec = GridSpec::new(21, 1);
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| grid_search(&p, &spec).unwrap());
        let many = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(|| grid_search(&p, &spec).unwrap());
        assert_eq!(one, many);
    }
}
