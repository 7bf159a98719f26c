//! System model for the two-hop relay link.
//!
//! The source (SN) transmits in the odd time slot of each phase and the relay
//! (RN) forwards in the even slot. Each node harvests a fraction `beta` of the
//! power the other transmits. Every time slot has unit duration, so powers and
//! energies are measured in the same units throughout the crate.
//!
//! Node indices follow the usual convention: node 1 is the source, node 2 the
//! relay. Phase numbers in errors and witnesses are 1-based.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Regime boundaries `beta = gamma` and `beta * gamma = 1` resolve toward the
/// simpler regime within this margin.
pub const REGIME_EPS: f64 = 1e-12;

/// Default absolute tolerance on energy-causality slacks.
pub const FEAS_TOL: f64 = 1e-9;

/// Exogenous description of one relay system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Bandwidth `B`; the objective is scaled by `B / 2` for half-duplex use.
    pub bandwidth: f64,
    /// Number of phases `N` (two time slots each).
    pub phases: usize,
    /// Normalized SNR of the SN→RN link per unit power.
    pub snr1: f64,
    /// Normalized SNR of the RN→DN link per unit power.
    pub snr2: f64,
    /// Harvesting gain `beta = eta * |h1|^2`.
    pub harvest: f64,
    /// Initial energy stored at the source.
    pub initial1: f64,
    /// Initial energy stored at the relay.
    pub initial2: f64,
}

impl SystemParams {
    pub fn new(
        bandwidth: f64,
        phases: usize,
        snr1: f64,
        snr2: f64,
        harvest: f64,
        initial1: f64,
        initial2: f64,
    ) -> Result<Self> {
        let params = Self {
            bandwidth,
            phases,
            snr1,
            snr2,
            harvest,
            initial1,
            initial2,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        fn positive(name: &'static str, v: f64) -> Result<()> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidParams {
                    name,
                    reason: format!("{v} must be finite and > 0"),
                })
            }
        }
        fn non_negative(name: &'static str, v: f64) -> Result<()> {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidParams {
                    name,
                    reason: format!("{v} must be finite and >= 0"),
                })
            }
        }
        positive("bandwidth", self.bandwidth)?;
        if self.phases == 0 {
            return Err(Error::InvalidParams {
                name: "phases",
                reason: "need at least one phase".into(),
            });
        }
        positive("snr1", self.snr1)?;
        positive("snr2", self.snr2)?;
        non_negative("harvest", self.harvest)?;
        non_negative("initial1", self.initial1)?;
        non_negative("initial2", self.initial2)?;
        let ratio = self.gamma();
        if !(ratio.is_finite() && ratio > 0.0) {
            return Err(Error::InvalidParams {
                name: "snr1/snr2",
                reason: format!("ratio {ratio} must be finite and > 0"),
            });
        }
        Ok(())
    }

    /// SNR ratio `gamma = snr1 / snr2`.
    pub fn gamma(&self) -> f64 {
        self.snr1 / self.snr2
    }
}

/// Per-phase transmit powers of both nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSchedule {
    /// `P_{1,j}`
    pub source: Vec<f64>,
    /// `P_{2,j}`
    pub relay: Vec<f64>,
}

impl PowerSchedule {
    pub fn new(source: Vec<f64>, relay: Vec<f64>) -> Result<Self> {
        if source.len() != relay.len() {
            return Err(Error::DimensionMismatch {
                expected: source.len(),
                got: relay.len(),
            });
        }
        let sched = Self { source, relay };
        sched.check_entries()?;
        Ok(sched)
    }

    pub fn zeros(phases: usize) -> Self {
        Self {
            source: vec![0.0; phases],
            relay: vec![0.0; phases],
        }
    }

    pub fn phases(&self) -> usize {
        self.source.len()
    }

    pub fn node(&self, node: usize) -> &[f64] {
        match node {
            1 => &self.source,
            2 => &self.relay,
            _ => panic!("node index must be 1 or 2, got {node}"),
        }
    }

    fn check_entries(&self) -> Result<()> {
        for (node, row) in [(1, &self.source), (2, &self.relay)] {
            for (j, &v) in row.iter().enumerate() {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(Error::InvalidPower {
                        node,
                        phase: j + 1,
                        value: v,
                    });
                }
            }
        }
        Ok(())
    }

    fn check_against(&self, params: &SystemParams) -> Result<()> {
        if self.source.len() != self.relay.len() {
            return Err(Error::DimensionMismatch {
                expected: self.source.len(),
                got: self.relay.len(),
            });
        }
        if self.phases() != params.phases {
            return Err(Error::DimensionMismatch {
                expected: params.phases,
                got: self.phases(),
            });
        }
        Ok(())
    }

    /// Convex combination `lambda * self + (1 - lambda) * other`.
    pub fn blend(&self, other: &PowerSchedule, lambda: f64) -> PowerSchedule {
        let mix = |a: &[f64], b: &[f64]| -> Vec<f64> {
            a.iter()
                .zip(b)
                .map(|(x, y)| lambda * x + (1.0 - lambda) * y)
                .collect()
        };
        PowerSchedule {
            source: mix(&self.source, &other.source),
            relay: mix(&self.relay, &other.relay),
        }
    }
}

/// Which nodes harvest RF energy. `Mutual` is the system under study; the
/// other two back the comparison baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Harvesting {
    /// Both nodes harvest from each other.
    Mutual,
    /// Only the source harvests; the relay lives on its initial storage.
    SourceOnly,
    /// Only the relay harvests. The source holds both initial stores and the
    /// relay starts empty.
    RelayOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    /// Slack of `EC_{1,j}` for each phase.
    pub slack1: Vec<f64>,
    /// Slack of `EC_{2,j}` for each phase.
    pub slack2: Vec<f64>,
    pub min_power: f64,
    pub tol: f64,
    pub feasible: bool,
}

impl FeasibilityReport {
    fn from_slacks(slack1: Vec<f64>, slack2: Vec<f64>, min_power: f64, tol: f64) -> Self {
        let feasible = slack1.iter().chain(&slack2).all(|&s| s >= -tol) && min_power >= -tol;
        Self {
            slack1,
            slack2,
            min_power,
            tol,
            feasible,
        }
    }

    pub fn min_slack(&self) -> f64 {
        self.slack1
            .iter()
            .chain(&self.slack2)
            .copied()
            .fold(f64::INFINITY, f64::min)
    }
}

/// `(B/2) * sum_j min_i log2(1 + P_{i,j} * snr_i)`.
pub fn throughput(params: &SystemParams, sched: &PowerSchedule) -> Result<f64> {
    sched.check_against(params)?;
    sched.check_entries()?;
    Ok(throughput_unchecked(params, sched))
}

pub(crate) fn throughput_unchecked(params: &SystemParams, sched: &PowerSchedule) -> f64 {
    let sum: f64 = sched
        .source
        .iter()
        .zip(&sched.relay)
        .map(|(&p1, &p2)| phase_rate(p1 * params.snr1, p2 * params.snr2))
        .sum();
    0.5 * params.bandwidth * sum
}

/// Spectral efficiency of one phase given both received SNRs.
#[inline]
pub(crate) fn phase_rate(snr_a: f64, snr_b: f64) -> f64 {
    (1.0 + snr_a.min(snr_b)).log2()
}

pub fn check_feasibility(
    params: &SystemParams,
    sched: &PowerSchedule,
    tol: f64,
) -> Result<FeasibilityReport> {
    check_feasibility_with(params, Harvesting::Mutual, sched, tol)
}

/// Energy-causality slacks under the given harvesting model.
///
/// With mutual harvesting the source may only spend energy harvested in earlier
/// phases, while the relay can already spend what it harvests from the source in
/// the current phase, since it forwards one slot after receiving.
pub fn check_feasibility_with(
    params: &SystemParams,
    harvesting: Harvesting,
    sched: &PowerSchedule,
    tol: f64,
) -> Result<FeasibilityReport> {
    sched.check_against(params)?;
    let n = params.phases;
    let beta = params.harvest;
    let mut slack1 = Vec::with_capacity(n);
    let mut slack2 = Vec::with_capacity(n);
    let (mut spent1, mut spent2) = (0.0, 0.0);
    for j in 0..n {
        let relay_before = spent2;
        spent1 += sched.source[j];
        spent2 += sched.relay[j];
        let (s1, s2) = match harvesting {
            Harvesting::Mutual => (
                params.initial1 + beta * relay_before - spent1,
                params.initial2 + beta * spent1 - spent2,
            ),
            Harvesting::SourceOnly => (
                params.initial1 + beta * relay_before - spent1,
                params.initial2 - spent2,
            ),
            Harvesting::RelayOnly => (
                params.initial1 + params.initial2 - spent1,
                beta * spent1 - spent2,
            ),
        };
        slack1.push(s1);
        slack2.push(s2);
    }
    let min_power = sched
        .source
        .iter()
        .chain(&sched.relay)
        .copied()
        .fold(f64::INFINITY, f64::min);
    let min_power = if min_power.is_finite() {
        min_power
    } else {
        0.0
    };
    Ok(FeasibilityReport::from_slacks(
        slack1, slack2, min_power, tol,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RegimeKind {
    /// `beta >= gamma`: fully cooperative relay.
    BetaGeGamma,
    /// `beta < gamma`, `beta * gamma >= 1`: fully greedy source.
    HighProduct,
    /// `beta < gamma`, `beta * gamma < 1`, source rich enough to supplement the relay.
    LowProductCase1,
    /// `beta < gamma`, `beta * gamma < 1`, source below the supplement threshold.
    LowProductCase2,
}

impl RegimeKind {
    pub fn is_low_product(self) -> bool {
        matches!(self, Self::LowProductCase1 | Self::LowProductCase2)
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::BetaGeGamma => "BetaGeGamma",
            Self::HighProduct => "HighProduct",
            Self::LowProductCase1 => "LowProductCase1",
            Self::LowProductCase2 => "LowProductCase2",
        }
    }
}

impl fmt::Display for RegimeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Parameters of the equivalent system used when `beta * gamma < 1`, where the
/// relay's within-phase harvest is netted out of its forwarding cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquivalentChannel {
    /// `gamma' = gamma - beta`
    pub snr_ratio: f64,
    /// `beta' = beta * gamma / gamma'`
    pub harvest: f64,
    /// `gamma_2' = snr1 / gamma'`
    pub relay_snr: f64,
    /// `(N - (N-1) beta' gamma') / (N gamma')`; the source supplements the
    /// relay iff `initial1 >= budget_ratio * initial2`.
    pub budget_ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regime {
    pub kind: RegimeKind,
    /// Present exactly for the low-product labels.
    pub equivalent: Option<EquivalentChannel>,
}

impl Regime {
    /// Threshold on `initial1` separating the two low-product cases.
    pub fn threshold(&self, params: &SystemParams) -> Option<f64> {
        self.equivalent.map(|eq| eq.budget_ratio * params.initial2)
    }
}

pub fn equivalent_channel(params: &SystemParams) -> EquivalentChannel {
    let gamma = params.gamma();
    let beta = params.harvest;
    let n = params.phases as f64;
    let snr_ratio = gamma - beta;
    let harvest = beta * gamma / snr_ratio;
    let relay_snr = params.snr1 / snr_ratio;
    let product = harvest * snr_ratio;
    let budget_ratio = (n - (n - 1.0) * product) / (n * snr_ratio);
    EquivalentChannel {
        snr_ratio,
        harvest,
        relay_snr,
        budget_ratio,
    }
}

pub fn classify_regime(params: &SystemParams, eps: f64) -> Regime {
    let gamma = params.gamma();
    let beta = params.harvest;
    if beta >= gamma - eps {
        return Regime {
            kind: RegimeKind::BetaGeGamma,
            equivalent: None,
        };
    }
    if beta * gamma >= 1.0 - eps {
        return Regime {
            kind: RegimeKind::HighProduct,
            equivalent: None,
        };
    }
    let eq = equivalent_channel(params);
    let kind = if params.initial1 >= params.initial2 * eq.budget_ratio {
        RegimeKind::LowProductCase1
    } else {
        RegimeKind::LowProductCase2
    };
    Regime {
        kind,
        equivalent: Some(eq),
    }
}

/// Split of each transmit power into a data part (rate-matched across the two
/// hops) and a supplement part that only charges the peer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecomposedSchedule {
    /// `p_{1,j}`
    pub data_source: Vec<f64>,
    /// `p_{2,j}`
    pub data_relay: Vec<f64>,
    /// `alpha_{1,j}`
    pub supp_source: Vec<f64>,
    /// `alpha_{2,j}`
    pub supp_relay: Vec<f64>,
}

impl DecomposedSchedule {
    pub fn phases(&self) -> usize {
        self.data_source.len()
    }

    /// Aggregated source supplement `alpha_1` (first phase).
    pub fn agg1(&self) -> f64 {
        self.supp_source.first().copied().unwrap_or(0.0)
    }

    /// Aggregated relay supplement `alpha_2` (first phase).
    pub fn agg2(&self) -> f64 {
        self.supp_relay.first().copied().unwrap_or(0.0)
    }

    pub fn assemble(&self) -> PowerSchedule {
        let add = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x + y).collect();
        PowerSchedule {
            source: add(&self.data_source, &self.supp_source),
            relay: add(&self.data_relay, &self.supp_relay),
        }
    }
}

pub fn decompose(params: &SystemParams, sched: &PowerSchedule) -> Result<DecomposedSchedule> {
    sched.check_against(params)?;
    let gamma = params.gamma();
    let n = params.phases;
    let mut dec = DecomposedSchedule {
        data_source: vec![0.0; n],
        data_relay: vec![0.0; n],
        supp_source: vec![0.0; n],
        supp_relay: vec![0.0; n],
    };
    for j in 0..n {
        let (p1, p2) = (sched.source[j], sched.relay[j]);
        if p1 * params.snr1 >= p2 * params.snr2 {
            dec.data_relay[j] = p2;
            dec.data_source[j] = p2 / gamma;
            dec.supp_source[j] = (p1 - p2 / gamma).max(0.0);
        } else {
            dec.data_source[j] = p1;
            dec.data_relay[j] = p1 * gamma;
            dec.supp_relay[j] = (p2 - p1 * gamma).max(0.0);
        }
    }
    Ok(dec)
}

/// Moves every relay supplement back to the first phase and nets opposing
/// supplements within a phase.
///
/// Netting trades one unit from each side for the `beta` units each would
/// have harvested; it is applied only when `beta <= 1`, where it never costs
/// energy. For `beta > 1` opposing supplements are left in place.
pub fn aggregate_supplements(
    params: &SystemParams,
    dec: &DecomposedSchedule,
) -> Result<DecomposedSchedule> {
    let regime = classify_regime(params, REGIME_EPS);
    if regime.kind == RegimeKind::BetaGeGamma {
        return Err(Error::RegimeMismatch {
            expected: "beta < gamma",
            actual: regime.kind,
        });
    }
    if dec.phases() != params.phases {
        return Err(Error::DimensionMismatch {
            expected: params.phases,
            got: dec.phases(),
        });
    }
    let net = params.harvest <= 1.0;
    let mut out = dec.clone();
    let net_phase = |out: &mut DecomposedSchedule, j: usize| {
        if net {
            let common = out.supp_source[j].min(out.supp_relay[j]);
            out.supp_source[j] -= common;
            out.supp_relay[j] -= common;
        }
    };
    for j in (1..params.phases).rev() {
        net_phase(&mut out, j);
        let moved = out.supp_relay[j];
        if moved > 0.0 {
            out.supp_relay[j - 1] += moved;
            out.supp_relay[j] = 0.0;
        }
    }
    net_phase(&mut out, 0);
    Ok(out)
}

/// Decision variables of the equivalent system: relay data powers in
/// equivalent units plus the two first-phase supplements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalentSchedule {
    pub data: Vec<f64>,
    pub alpha1: f64,
    pub alpha2: f64,
}

fn low_product_channel(regime: &Regime) -> Result<EquivalentChannel> {
    match (regime.kind.is_low_product(), regime.equivalent) {
        (true, Some(eq)) => Ok(eq),
        _ => Err(Error::RegimeMismatch {
            expected: "a low-product regime (beta < gamma, beta * gamma < 1)",
            actual: regime.kind,
        }),
    }
}

/// Physical schedule for an equivalent-system point:
/// `P_{2,j} = p_{2,j} gamma / gamma' + alpha_{2,j}` and
/// `P_{1,j} = p_{2,j} / gamma' + alpha_{1,j}`.
pub fn to_physical(
    params: &SystemParams,
    regime: &Regime,
    eq: &EquivalentSchedule,
) -> Result<PowerSchedule> {
    let ch = low_product_channel(regime)?;
    if eq.data.len() != params.phases {
        return Err(Error::DimensionMismatch {
            expected: params.phases,
            got: eq.data.len(),
        });
    }
    let gamma = params.gamma();
    let mut source: Vec<f64> = eq.data.iter().map(|p| p / ch.snr_ratio).collect();
    let mut relay: Vec<f64> = eq.data.iter().map(|p| p * gamma / ch.snr_ratio).collect();
    source[0] += eq.alpha1;
    relay[0] += eq.alpha2;
    PowerSchedule::new(source, relay)
}

/// Inverse of [`to_physical`]. The schedule must carry supplements in the
/// first phase only.
pub fn to_equivalent(
    params: &SystemParams,
    regime: &Regime,
    sched: &PowerSchedule,
) -> Result<EquivalentSchedule> {
    let ch = low_product_channel(regime)?;
    let dec = decompose(params, sched)?;
    let gamma = params.gamma();
    for j in 1..params.phases {
        let scale = 1.0 + sched.source[j].max(sched.relay[j]);
        if dec.supp_source[j] > 1e-9 * scale || dec.supp_relay[j] > 1e-9 * scale {
            return Err(Error::NotAggregated { phase: j + 1 });
        }
    }
    let data = dec
        .data_relay
        .iter()
        .map(|p| p * ch.snr_ratio / gamma)
        .collect();
    Ok(EquivalentSchedule {
        data,
        alpha1: dec.agg1(),
        alpha2: dec.agg2(),
    })
}

/// Constraint slacks of the equivalent program: `EC_{1,j}` for every phase
/// followed by the relay's total budget.
pub fn equivalent_slacks(
    params: &SystemParams,
    regime: &Regime,
    eq: &EquivalentSchedule,
) -> Result<Vec<f64>> {
    let ch = low_product_channel(regime)?;
    let beta = params.harvest;
    let product = ch.harvest * ch.snr_ratio;
    let mut out = Vec::with_capacity(params.phases + 1);
    let mut cum = 0.0;
    for (j, &p) in eq.data.iter().enumerate() {
        let before = cum;
        cum += p;
        let own = if j == 0 {
            params.initial1 - eq.alpha1
        } else {
            params.initial1 - eq.alpha1 + beta * eq.alpha2
        };
        out.push(own * ch.snr_ratio + product * before - cum);
    }
    out.push(params.initial2 + beta * eq.alpha1 - cum - eq.alpha2);
    Ok(out)
}
