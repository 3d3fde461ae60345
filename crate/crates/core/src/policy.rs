//! Ordering policies and their evaluation interface.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::adp::ValueApprox;
use crate::engine::StageModel;
use crate::exact_dp::PolicyTable;
use crate::mdp::{advance, cost_terms, InventoryState, Scenario, StateGrid};
use crate::rng::{self, Purpose};
use crate::shelflife::DeliverySampler;

/// Identifies one decision epoch; Monte-Carlo policies key their uniform block on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecisionKey {
    pub seed: u64,
    pub replication: u64,
    pub period: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    Myopic,
    ExactOptimal,
    DeterministicShelfLife,
    ExogenousAdp,
    EndogenousAdp,
    LookupTable,
}

impl PolicyKind {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Myopic => "myopic",
            Self::ExactOptimal => "exact-optimal",
            Self::DeterministicShelfLife => "deterministic-shelf-life",
            Self::ExogenousAdp => "exogenous-adp",
            Self::EndogenousAdp => "endogenous-adp",
            Self::LookupTable => "lookup-table",
        }
    }
}

/// Minimizer of the expected single-period cost, tabulated over `(τ, x_1, Σx)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MyopicTable {
    cap: usize,
    total_len: usize,
    actions: Vec<u16>,
}

impl MyopicTable {
    pub fn new(scenario: &Scenario) -> Self {
        Self::from_stage(&StageModel::new(scenario))
    }

    pub fn from_stage(stage: &StageModel) -> Self {
        let total_len = (stage.m - 1) * stage.cap + 1;
        let mut actions = Vec::with_capacity(stage.period * (stage.cap + 1) * total_len);
        for tau in 0..stage.period {
            for oldest in 0..=stage.cap {
                for total in 0..total_len {
                    let a = if total < oldest { 0 } else { stage.myopic_action(tau, oldest, total) };
                    actions.push(a as u16);
                }
            }
        }
        Self { cap: stage.cap, total_len, actions }
    }

    pub fn action(&self, state: &InventoryState) -> usize {
        let idx = (state.tau * (self.cap + 1) + state.x[0] as usize) * self.total_len + state.total() as usize;
        self.actions[idx] as usize
    }
}

/// Greedy policy against a value approximation using sample averages over a
/// block of common uniforms shared by every candidate order.
#[derive(Debug, Clone)]
pub struct MonteCarloGreedy {
    pub approx: Arc<ValueApprox>,
    pub samples: usize,
    sampler: DeliverySampler,
    scenario: Scenario,
}

impl MonteCarloGreedy {
    pub fn new(scenario: &Scenario, approx: Arc<ValueApprox>, samples: usize) -> Self {
        let sampler = DeliverySampler::new(&scenario.shelf_life, scenario.max_order());
        Self { approx, samples: samples.max(1), sampler, scenario: scenario.clone() }
    }

    /// Sample-average value of every order size over `uniforms`, laid out as
    /// `samples` blocks of `M` delivery uniforms followed by one demand uniform.
    pub fn q_values(&self, state: &InventoryState, uniforms: &[f64]) -> Vec<f64> {
        let sc = &self.scenario;
        let big_m = sc.max_order();
        let m = sc.m();
        let block = big_m + 1;
        let n = uniforms.len() / block;
        let alpha = sc.costs.discount;
        let cap = sc.inventory_cap as u32;
        let next_tau = (state.tau + 1) % sc.period();
        let total = state.total();
        let mut y = vec![0u32; m];
        let mut next = vec![0u32; m - 1];
        let demands: Vec<u32> = (0..n).map(|k| sc.demand.sample(state.tau, uniforms[k * block + big_m]) as u32).collect();
        (0..=big_m)
            .map(|z| {
                let mut acc = 0.0;
                for (k, &d) in demands.iter().enumerate() {
                    self.sampler.sample_into(z, &uniforms[k * block..k * block + big_m], &mut y);
                    advance(&state.x, &y, d, cap, &mut next);
                    let c = cost_terms(&sc.costs, z, total + z as u32, state.x[0] + y[0], d).total();
                    acc += c + alpha * self.approx.value(next_tau, &next);
                }
                acc / n as f64
            })
            .collect()
    }

    pub fn action(&self, state: &InventoryState, key: DecisionKey) -> usize {
        let mut u = vec![0.0; self.samples * (self.scenario.max_order() + 1)];
        rng::fill_uniform(&mut rng::stream(key.seed, Purpose::Greedy, key.replication, key.period), &mut u);
        crate::engine::argmin(self.q_values(state, &u).into_iter())
    }
}

#[derive(Debug, Clone)]
pub enum PolicyRule {
    Table(Arc<PolicyTable>),
    Myopic(Arc<MyopicTable>),
    MonteCarlo(Arc<MonteCarloGreedy>),
}

/// A resolved ordering policy.
#[derive(Debug, Clone)]
pub struct PolicyHandle {
    pub kind: PolicyKind,
    pub rule: PolicyRule,
    /// Approximation the rule was derived from, when there is one.
    pub approx: Option<Arc<ValueApprox>>,
}

impl PolicyHandle {
    pub fn table(kind: PolicyKind, table: PolicyTable) -> Self {
        Self { kind, rule: PolicyRule::Table(Arc::new(table)), approx: None }
    }

    pub fn myopic(scenario: &Scenario) -> Self {
        Self { kind: PolicyKind::Myopic, rule: PolicyRule::Myopic(Arc::new(MyopicTable::new(scenario))), approx: None }
    }

    pub fn order(&self, state: &InventoryState, key: DecisionKey) -> usize {
        match &self.rule {
            PolicyRule::Table(t) => t.action(state),
            PolicyRule::Myopic(t) => t.action(state),
            PolicyRule::MonteCarlo(g) => g.action(state, key),
        }
    }

    /// Tabulates a deterministic rule over `grid`; Monte-Carlo rules have no table.
    pub fn materialize(&self, grid: StateGrid) -> Option<PolicyTable> {
        match &self.rule {
            PolicyRule::Table(t) => Some(PolicyTable::clone(t)),
            PolicyRule::Myopic(t) => {
                Some(PolicyTable { grid, actions: (0..grid.len()).map(|i| t.action(&grid.state(i)) as u16).collect() })
            }
            PolicyRule::MonteCarlo(_) => None,
        }
    }

    /// Lookup table when the policy is one (deterministic rules on small grids).
    pub fn as_table(&self) -> Option<&PolicyTable> {
        match &self.rule {
            PolicyRule::Table(t) => Some(t),
            _ => None,
        }
    }
}
