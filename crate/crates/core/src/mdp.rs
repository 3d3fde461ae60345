//! State, OUFO dynamics and stage cost.
//!
//! Inventory vectors are stored ascending by remaining shelf-life: `x[0]` is
//! `x_1` (units that expire at the end of this period) and `x[m-2]` is
//! `x_{m-1}`. Deliveries `y` have length `m` with the same convention.

use serde::{Deserialize, Serialize};

use crate::demand::PeriodicDemandModel;
use crate::error::{domain, Error, Result};
use crate::shelflife::{DeliveryVector, ShelfLifeModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    /// Fixed cost of any nonzero order (f).
    pub fixed: f64,
    /// Unit holding cost (h).
    pub holding: f64,
    /// Unit lost-sales cost (l).
    pub shortage: f64,
    /// Unit expiry cost (θ).
    pub wastage: f64,
    /// Discount factor (α).
    pub discount: f64,
}

impl CostParams {
    pub fn validate(&self) -> Result<()> {
        let c = [self.fixed, self.holding, self.shortage, self.wastage];
        if c.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidParameter(format!("costs must be finite and nonnegative: {self:?}")));
        }
        if !(0.0..1.0).contains(&self.discount) {
            return Err(Error::InvalidParameter(format!("discount must lie in [0, 1), got {}", self.discount)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub fixed: f64,
    pub holding: f64,
    pub shortage: f64,
    pub wastage: f64,
}

impl CostBreakdown {
    pub fn total(&self) -> f64 {
        self.fixed + self.holding + self.shortage + self.wastage
    }
}

/// Pre-decision state `(τ, x)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InventoryState {
    pub tau: usize,
    pub x: Vec<u32>,
}

impl InventoryState {
    pub fn new(tau: usize, x: Vec<u32>) -> Self {
        Self { tau, x }
    }

    pub fn empty(tau: usize, m: usize) -> Self {
        Self { tau, x: vec![0; m - 1] }
    }

    /// Builds from `(x_{m-1}, ..., x_1)`.
    pub fn from_freshest_first(tau: usize, x: &[u32]) -> Self {
        Self { tau, x: x.iter().rev().cloned().collect() }
    }

    /// Units with remaining shelf-life `i` (1-based).
    pub fn get(&self, i: usize) -> u32 {
        self.x[i - 1]
    }

    pub fn total(&self) -> u32 {
        self.x.iter().sum()
    }
}

/// A fully specified inventory problem.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub demand: PeriodicDemandModel,
    pub shelf_life: ShelfLifeModel,
    pub costs: CostParams,
    /// Per-age inventory cap applied after every transition.
    pub inventory_cap: usize,
}

impl Scenario {
    /// Scenario with the default cap `X_cap = M`.
    pub fn new(demand: PeriodicDemandModel, shelf_life: ShelfLifeModel, costs: CostParams) -> Result<Self> {
        let cap = demand.truncation();
        Self::with_cap(demand, shelf_life, costs, cap)
    }

    pub fn with_cap(demand: PeriodicDemandModel, shelf_life: ShelfLifeModel, costs: CostParams, inventory_cap: usize) -> Result<Self> {
        costs.validate()?;
        if shelf_life.max_shelf_life() < 2 {
            return Err(Error::InvalidParameter("maximum shelf-life must be at least 2".into()));
        }
        Ok(Self { demand, shelf_life, costs, inventory_cap })
    }

    pub fn m(&self) -> usize {
        self.shelf_life.max_shelf_life()
    }

    /// Largest order size and largest demand value (M).
    pub fn max_order(&self) -> usize {
        self.demand.truncation()
    }

    pub fn period(&self) -> usize {
        self.demand.period()
    }

    pub fn start_state(&self) -> InventoryState {
        InventoryState::empty(0, self.m())
    }

    pub fn with_shelf_life(&self, shelf_life: ShelfLifeModel) -> Self {
        Self { shelf_life, ..self.clone() }
    }

    pub fn with_costs(&self, costs: CostParams) -> Self {
        Self { costs, ..self.clone() }
    }

    pub fn check_state(&self, s: &InventoryState) -> Result<()> {
        if s.tau >= self.period() || s.x.len() != self.m() - 1 {
            return domain(format!("state {s:?} does not fit period {} and m={}", self.period(), self.m()));
        }
        if s.x.iter().any(|&v| v as usize > self.inventory_cap) {
            return domain(format!("state {s:?} exceeds the per-age cap {}", self.inventory_cap));
        }
        Ok(())
    }

    /// Largest stage cost on the truncated state space.
    pub fn stage_cost_bound(&self) -> f64 {
        let c = &self.costs;
        let (m, cap, big_m) = (self.m() as f64, self.inventory_cap as f64, self.max_order() as f64);
        c.fixed + c.holding * ((m - 1.0) * cap + big_m) + c.shortage * big_m + c.wastage * (cap + big_m)
    }
}

/// Unit flows of one period.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Flows {
    pub transfused: u32,
    pub unmet: u32,
    pub expired: u32,
    /// Units discarded by the per-age cap.
    pub clamped: u32,
}

/// Allocation-free OUFO step. `x` has length `m-1`, `y` length `m`,
/// `next` length `m-1`.
#[inline]
pub fn advance(x: &[u32], y: &[u32], d: u32, cap: u32, next: &mut [u32]) -> Flows {
    let m = y.len();
    let mut remaining = d;
    let mut flows = Flows::default();
    for i in 0..m {
        let a = if i + 1 < m { x[i] + y[i] } else { y[i] };
        let used = a.min(remaining);
        remaining -= used;
        let left = a - used;
        if i == 0 {
            flows.expired = left;
        } else if left > cap {
            next[i - 1] = cap;
            flows.clamped += left - cap;
        } else {
            next[i - 1] = left;
        }
    }
    flows.unmet = remaining;
    flows.transfused = d - remaining;
    flows
}

/// Stage cost from the order size, post-delivery totals and demand.
///
/// `total` is `Σx + z`, `oldest` is `x_1 + y_1`.
#[inline]
pub fn cost_terms(c: &CostParams, z: usize, total: u32, oldest: u32, d: u32) -> CostBreakdown {
    CostBreakdown {
        fixed: if z > 0 { c.fixed } else { 0.0 },
        holding: c.holding * total.saturating_sub(d) as f64,
        shortage: c.shortage * d.saturating_sub(total) as f64,
        wastage: c.wastage * oldest.saturating_sub(d) as f64,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next: InventoryState,
    pub cost: CostBreakdown,
    pub flows: Flows,
}

pub fn step(scenario: &Scenario, state: &InventoryState, z: usize, y: &DeliveryVector, d: usize) -> StepOutcome {
    debug_assert_eq!(y.total(), z);
    let mut next = vec![0u32; state.x.len()];
    let flows = advance(&state.x, &y.counts, d as u32, scenario.inventory_cap as u32, &mut next);
    let total = state.total() + z as u32;
    let cost = cost_terms(&scenario.costs, z, total, state.x[0] + y.counts[0], d as u32);
    StepOutcome { next: InventoryState { tau: (state.tau + 1) % scenario.period(), x: next }, cost, flows }
}

pub fn transition(scenario: &Scenario, state: &InventoryState, z: usize, y: &DeliveryVector, d: usize) -> InventoryState {
    step(scenario, state, z, y, d).next
}

pub fn stage_cost(scenario: &Scenario, state: &InventoryState, z: usize, y: &DeliveryVector, d: usize) -> CostBreakdown {
    step(scenario, state, z, y, d).cost
}

/// Exact `E[C + α g(next)]` by enumerating every delivery composition and demand value.
///
/// Fails with `BudgetExceeded` when the composition count exceeds `budget`.
pub fn expectation_over_outcomes(
    scenario: &Scenario,
    state: &InventoryState,
    z: usize,
    budget: usize,
    g: impl Fn(&InventoryState) -> f64,
) -> Result<f64> {
    scenario.check_state(state)?;
    if z > scenario.max_order() {
        return domain(format!("order {z} exceeds M={}", scenario.max_order()));
    }
    let needed = scenario.shelf_life.support_size(z);
    if needed > budget {
        return Err(Error::BudgetExceeded { needed, budget });
    }
    let alpha = scenario.costs.discount;
    let row = scenario.demand.row(state.tau);
    let mut acc = 0.0;
    for (y, py) in scenario.shelf_life.support(z) {
        for (d, &pd) in row.iter().enumerate() {
            if pd == 0.0 {
                continue;
            }
            let out = step(scenario, state, z, &y, d);
            let cont = if alpha > 0.0 { alpha * g(&out.next) } else { 0.0 };
            acc += py * pd * (out.cost.total() + cont);
        }
    }
    Ok(acc)
}

/// Per-period tables of `E(s-D)^+` and `E(D-s)^+`.
#[derive(Debug, Clone)]
pub struct DemandTables {
    pub over: Vec<Vec<f64>>,
    pub under: Vec<Vec<f64>>,
}

impl DemandTables {
    pub fn new(demand: &PeriodicDemandModel, s_max: usize) -> Self {
        let mut over = Vec::with_capacity(demand.period());
        let mut under = Vec::with_capacity(demand.period());
        for tau in 0..demand.period() {
            let row = demand.row(tau);
            let (o, u): (Vec<f64>, Vec<f64>) = (0..=s_max)
                .map(|s| {
                    row.iter()
                        .enumerate()
                        .fold((0.0, 0.0), |(o, u), (d, &p)| (o + p * s.saturating_sub(d) as f64, u + p * d.saturating_sub(s) as f64))
                })
                .unzip();
            over.push(o);
            under.push(u);
        }
        Self { over, under }
    }
}

/// Enumeration of the truncated state grid: linear index `Σ x_i (cap+1)^(i-1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateGrid {
    pub m: usize,
    pub cap: usize,
    pub period: usize,
}

impl StateGrid {
    pub fn new(scenario: &Scenario) -> Self {
        Self { m: scenario.m(), cap: scenario.inventory_cap, period: scenario.period() }
    }

    /// Inventory vectors per weekday.
    pub fn per_period(&self) -> usize {
        (self.cap + 1).pow((self.m - 1) as u32)
    }

    pub fn len(&self) -> usize {
        self.period * self.per_period()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index_x(&self, x: &[u32]) -> usize {
        x.iter().rev().fold(0, |acc, &v| acc * (self.cap + 1) + v as usize)
    }

    pub fn index(&self, s: &InventoryState) -> usize {
        s.tau * self.per_period() + self.index_x(&s.x)
    }

    pub fn decode_x(&self, mut idx: usize, out: &mut [u32]) {
        for v in out.iter_mut() {
            *v = (idx % (self.cap + 1)) as u32;
            idx /= self.cap + 1;
        }
    }

    pub fn state(&self, idx: usize) -> InventoryState {
        let mut x = vec![0; self.m - 1];
        self.decode_x(idx % self.per_period(), &mut x);
        InventoryState { tau: idx / self.per_period(), x }
    }
}
