//! Discounted-cost estimation and operational metrics of a policy.

use std::io::BufRead;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::mdp::{InventoryState, Scenario};
use crate::policy::PolicyHandle;
use crate::rng::{self, Purpose};
use crate::simulate::Simulator;
use crate::stats::{Estimate, Z95};

/// Unit totals of one trajectory.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnitTotals {
    pub initial: u64,
    pub delivered: u64,
    pub demand: u64,
    pub transfused: u64,
    pub unmet: u64,
    pub expired: u64,
    pub clamped: u64,
    pub end: u64,
    pub orders: u64,
}

impl UnitTotals {
    /// `initial + delivered = transfused + expired + clamped + end`.
    pub fn balanced(&self) -> bool {
        self.initial + self.delivered == self.transfused + self.expired + self.clamped + self.end
    }
}

/// Everything measured on one simulated trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryMetrics {
    pub discounted_cost: f64,
    pub totals: UnitTotals,
    pub periods: usize,
    /// Sum over periods of end-of-period carried inventory.
    pub carried: u64,
    /// Per weekday: (sum of post-delivery inventory, visits).
    pub weekday_stock: Vec<(u64, u64)>,
    pub demands: Vec<u32>,
}

impl TrajectoryMetrics {
    pub fn order_frequency(&self) -> f64 {
        100.0 * self.totals.orders as f64 / self.periods as f64
    }
    pub fn shortage_rate(&self) -> f64 {
        ratio(self.totals.unmet, self.totals.demand)
    }
    pub fn expiry_rate(&self) -> f64 {
        ratio(self.totals.expired, self.totals.delivered)
    }
    pub fn avg_holding(&self) -> f64 {
        self.carried as f64 / self.periods as f64
    }
    pub fn avg_order_size(&self) -> f64 {
        if self.totals.orders == 0 {
            0.0
        } else {
            self.totals.delivered as f64 / self.totals.orders as f64
        }
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        100.0 * a as f64 / b as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub cost: Estimate,
    /// Percent of periods with a nonzero order.
    pub order_frequency: Estimate,
    /// Units ordered per trajectory.
    pub total_orders: Estimate,
    /// Mean size of nonzero orders.
    pub avg_order_size: Estimate,
    /// End-of-period carried inventory per period.
    pub avg_holding: Estimate,
    /// `100 · unmet / demand`.
    pub shortage_rate: Estimate,
    /// `100 · expired / delivered`.
    pub expiry_rate: Estimate,
    /// Mean post-delivery inventory per weekday.
    pub weekday_inventory: Vec<f64>,
    pub clamp_events: u64,
    pub replications: usize,
    pub horizon: usize,
    /// Every trajectory satisfied the unit balance.
    pub balanced: bool,
}

impl EvaluationReport {
    pub fn from_trajectories(runs: &[TrajectoryMetrics], period: usize) -> Self {
        let est = |f: &dyn Fn(&TrajectoryMetrics) -> f64| Estimate::from_samples(&runs.iter().map(f).collect::<Vec<_>>());
        let mut weekday = vec![(0u64, 0u64); period];
        for r in runs {
            for (w, (s, n)) in weekday.iter_mut().zip(&r.weekday_stock) {
                w.0 += s;
                w.1 += n;
            }
        }
        Self {
            cost: est(&|r| r.discounted_cost),
            order_frequency: est(&|r| r.order_frequency()),
            total_orders: est(&|r| r.totals.delivered as f64),
            avg_order_size: est(&|r| r.avg_order_size()),
            avg_holding: est(&|r| r.avg_holding()),
            shortage_rate: est(&|r| r.shortage_rate()),
            expiry_rate: est(&|r| r.expiry_rate()),
            weekday_inventory: weekday.iter().map(|&(s, n)| if n == 0 { 0.0 } else { s as f64 / n as f64 }).collect(),
            clamp_events: runs.iter().map(|r| r.totals.clamped).sum(),
            replications: runs.len(),
            horizon: runs.first().map_or(0, |r| r.periods),
            balanced: runs.iter().all(|r| r.totals.balanced()),
        }
    }
}

const TAG_DECISION: u64 = 0xDEC;

/// Simulates one trajectory under `(seed, replication)` streams.
pub fn simulate_trajectory(
    sim: &Simulator<'_>,
    policy: &PolicyHandle,
    start: &InventoryState,
    horizon: usize,
    seed: u64,
    replication: u64,
    trace: Option<&[usize]>,
) -> TrajectoryMetrics {
    let sc = sim.scenario;
    let alpha = sc.costs.discount;
    let mut m = TrajectoryMetrics {
        discounted_cost: 0.0,
        totals: UnitTotals { initial: start.total() as u64, ..UnitTotals::default() },
        periods: horizon,
        carried: 0,
        weekday_stock: vec![(0, 0); sc.period()],
        demands: Vec::with_capacity(horizon),
    };
    let mut disc = 1.0;
    let mut last_total = start.total() as u64;
    sim.run(policy, start.clone(), horizon, seed, replication, rng::derive(seed, TAG_DECISION), trace, |p| {
        m.discounted_cost += disc * p.outcome.cost.total();
        disc *= alpha;
        let f = p.outcome.flows;
        let t = &mut m.totals;
        t.delivered += p.order as u64;
        t.orders += (p.order > 0) as u64;
        t.demand += p.demand as u64;
        t.transfused += f.transfused as u64;
        t.unmet += f.unmet as u64;
        t.expired += f.expired as u64;
        t.clamped += f.clamped as u64;
        let carried = p.outcome.next.total() as u64;
        m.carried += carried;
        last_total = carried;
        let w = &mut m.weekday_stock[p.state.tau];
        w.0 += (p.state.total() as usize + p.order) as u64;
        w.1 += 1;
        m.demands.push(p.demand as u32);
    });
    m.totals.end = last_total;
    m
}

/// `Q` independent trajectories of `H` periods from `start`.
pub fn evaluate_policy(
    policy: &PolicyHandle,
    scenario: &Scenario,
    start: &InventoryState,
    horizon: usize,
    replications: usize,
    seed: u64,
) -> Result<EvaluationReport> {
    let runs = simulate_many(policy, scenario, start, horizon, replications, seed, None)?;
    Ok(EvaluationReport::from_trajectories(&runs, scenario.period()))
}

pub fn simulate_many(
    policy: &PolicyHandle,
    scenario: &Scenario,
    start: &InventoryState,
    horizon: usize,
    replications: usize,
    seed: u64,
    trace: Option<&[usize]>,
) -> Result<Vec<TrajectoryMetrics>> {
    if horizon == 0 || replications < 2 {
        return Err(Error::InvalidParameter(format!("evaluation needs H >= 1 and Q >= 2 (got {horizon}, {replications})")));
    }
    scenario.check_state(start)?;
    let sim = Simulator::new(scenario);
    Ok((0..replications as u64).into_par_iter().map(|r| simulate_trajectory(&sim, policy, start, horizon, seed, r, trace)).collect())
}

/// Two policies on identical streams, with the paired cost difference `a - b`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedComparison {
    pub a: EvaluationReport,
    pub b: EvaluationReport,
    pub cost_difference: Estimate,
    pub expiry_difference: Estimate,
}

pub fn evaluate_paired(
    a: &PolicyHandle,
    b: &PolicyHandle,
    scenario: &Scenario,
    start: &InventoryState,
    horizon: usize,
    replications: usize,
    seed: u64,
    trace: Option<&[usize]>,
) -> Result<PairedComparison> {
    let ra = simulate_many(a, scenario, start, horizon, replications, seed, trace)?;
    let rb = simulate_many(b, scenario, start, horizon, replications, seed, trace)?;
    if ra.iter().zip(&rb).any(|(x, y)| x.demands != y.demands) {
        return Err(Error::Domain("paired runs saw different demand streams".into()));
    }
    let diff =
        |f: &dyn Fn(&TrajectoryMetrics) -> f64| Estimate::from_samples(&ra.iter().zip(&rb).map(|(x, y)| f(x) - f(y)).collect::<Vec<_>>());
    Ok(PairedComparison {
        cost_difference: diff(&|r| r.discounted_cost),
        expiry_difference: diff(&|r| r.expiry_rate()),
        a: EvaluationReport::from_trajectories(&ra, scenario.period()),
        b: EvaluationReport::from_trajectories(&rb, scenario.period()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceKind {
    Exact,
    LowerBound,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gap {
    pub percent: f64,
    pub half_width: f64,
}

/// `100 (policy - reference) / reference`. The interval uses the policy's
/// error only against an exact reference, and both errors (delta method)
/// against a lower bound.
pub fn optimality_gap(policy: Estimate, reference: Estimate, kind: ReferenceKind) -> Result<Gap> {
    let r = reference.mean;
    if !(r > 0.0) {
        return Err(Error::InvalidParameter(format!("reference cost must be positive, got {r}")));
    }
    let percent = 100.0 * (policy.mean - r) / r;
    let se = match kind {
        ReferenceKind::Exact => policy.std_err / r,
        ReferenceKind::LowerBound => ((policy.std_err / r).powi(2) + (policy.mean * reference.std_err / (r * r)).powi(2)).sqrt(),
    };
    Ok(Gap { percent, half_width: 100.0 * Z95 * se })
}

/// A replayed demand sequence starting on a given weekday.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemandTrace {
    pub start_weekday: usize,
    pub values: Vec<i64>,
}

impl DemandTrace {
    /// One-column CSV whose header row is `start_weekday=<n>`.
    pub fn parse(r: impl BufRead) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| Error::Config("empty demand trace".into()))??;
        let start_weekday = header
            .trim()
            .strip_prefix("start_weekday=")
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| Error::Config(format!("trace header must be start_weekday=<n>, got {header:?}")))?;
        let mut values = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            values.push(t.parse().map_err(|_| Error::Config(format!("trace line {}: not an integer: {t:?}", i + 2)))?);
        }
        Ok(Self { start_weekday, values })
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("start_weekday={}\n", self.start_weekday);
        for v in &self.values {
            s.push_str(&format!("{v}\n"));
        }
        s
    }

    /// Samples `len` days from the demand model.
    pub fn synthetic(scenario: &Scenario, start_weekday: usize, len: usize, seed: u64) -> Self {
        let mut rng = rng::stream(seed, Purpose::Trace, 0, 0);
        let values =
            (0..len).map(|t| scenario.demand.sample((start_weekday + t) % scenario.period(), rng.random::<f64>()) as i64).collect();
        Self { start_weekday, values }
    }

    /// Values usable by the simulator and the number clamped to `M`.
    pub fn checked(&self, max: usize) -> Result<(Vec<usize>, usize)> {
        if self.values.is_empty() {
            return domain("demand trace is empty");
        }
        if let Some(v) = self.values.iter().find(|&&v| v < 0) {
            return domain(format!("demand trace contains a negative value ({v})"));
        }
        let clamped = self.values.iter().filter(|&&v| v as usize > max).count();
        Ok((self.values.iter().map(|&v| (v as usize).min(max)).collect(), clamped))
    }
}

/// Replays `trace` while shelf-life outcomes are simulated `reps` times.
pub fn evaluate_on_demand_trace(
    policy: &PolicyHandle,
    scenario: &Scenario,
    trace: &DemandTrace,
    reps: usize,
    seed: u64,
) -> Result<EvaluationReport> {
    let (values, _) = trace.checked(scenario.max_order())?;
    if trace.start_weekday >= scenario.period() {
        return domain(format!("start weekday {} outside the demand period", trace.start_weekday));
    }
    let start = InventoryState::empty(trace.start_weekday, scenario.m());
    let runs = simulate_many(policy, scenario, &start, values.len(), reps, seed, Some(&values))?;
    Ok(EvaluationReport::from_trajectories(&runs, scenario.period()))
}
