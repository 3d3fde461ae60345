//! Exact value iteration, exact policy evaluation, the nonperishable scalar
//! problem, and structural-property witness finders.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::engine::{argmin, Engine, EngineLimits};
use crate::error::{Error, Result};
use crate::mdp::{InventoryState, Scenario, StateGrid};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Sup-norm stopping tolerance.
    pub tol: f64,
    pub max_iters: usize,
    pub limits: EngineLimits,
    /// Permit `m > 3`.
    pub allow_large: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { tol: 1e-6, max_iters: 20_000, limits: EngineLimits::default(), allow_large: false }
    }
}

impl SolveOptions {
    pub fn large() -> Self {
        Self { allow_large: true, limits: EngineLimits { max_table: 1 << 26, ..EngineLimits::default() }, ..Self::default() }
    }

    pub fn engine(&self, scenario: &Scenario) -> Result<Engine> {
        if scenario.m() > 3 && !self.allow_large {
            let states = StateGrid::new(scenario).len();
            return Err(Error::StateSpaceTooLarge { states, limit: StateGrid { m: 3, ..StateGrid::new(scenario) }.len() });
        }
        Engine::new(scenario, self.limits)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    pub grid: StateGrid,
    pub values: Vec<f64>,
    /// Final sup-norm change between the last two iterates.
    pub residual: f64,
    /// Sup-norm change of every sweep.
    pub residuals: Vec<f64>,
}

impl ValueTable {
    pub fn value(&self, s: &InventoryState) -> f64 {
        self.values[self.grid.index(s)]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyTable {
    pub grid: StateGrid,
    pub actions: Vec<u16>,
}

impl PolicyTable {
    pub fn action(&self, s: &InventoryState) -> usize {
        self.actions[self.grid.index(s)] as usize
    }
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| f64::max(m, (x - y).abs()))
}

/// Jacobi value iteration from zero. The returned policy is greedy with respect
/// to the returned values (smallest order among minimizers).
pub fn value_iteration(scenario: &Scenario, opts: &SolveOptions) -> Result<(ValueTable, PolicyTable)> {
    let engine = opts.engine(scenario)?;
    value_iteration_with(&engine, scenario, opts)
}

pub fn value_iteration_with(engine: &Engine, scenario: &Scenario, opts: &SolveOptions) -> Result<(ValueTable, PolicyTable)> {
    let mut v = vec![0.0; engine.grid.len()];
    let mut residuals = Vec::new();
    for _ in 0..opts.max_iters {
        let (next, policy) = engine.bellman(scenario, &v);
        let r = sup_diff(&next, &v);
        residuals.push(r);
        v = next;
        if r <= opts.tol {
            let policy = if scenario.costs.discount == 0.0 { policy } else { engine.greedy_policy(scenario, Some(&v)) };
            let grid = engine.grid;
            return Ok((ValueTable { grid, values: v, residual: r, residuals }, PolicyTable { grid, actions: policy }));
        }
    }
    Err(Error::NotConverged { iterations: opts.max_iters, residual: residuals.last().copied().unwrap_or(f64::NAN) })
}

/// Discounted value of a fixed policy table by iterating its evaluation operator.
pub fn evaluate_policy_exact(scenario: &Scenario, policy: &PolicyTable, opts: &SolveOptions) -> Result<ValueTable> {
    let engine = opts.engine(scenario)?;
    evaluate_policy_with(&engine, scenario, policy, opts)
}

pub fn evaluate_policy_with(engine: &Engine, scenario: &Scenario, policy: &PolicyTable, opts: &SolveOptions) -> Result<ValueTable> {
    if policy.grid != engine.grid {
        return Err(Error::InvalidParameter("policy grid does not match the scenario grid".into()));
    }
    let mut v = vec![0.0; engine.grid.len()];
    let mut residuals = Vec::new();
    for _ in 0..opts.max_iters {
        let next = engine.evaluate(scenario, &v, &policy.actions);
        let r = sup_diff(&next, &v);
        residuals.push(r);
        v = next;
        if r <= opts.tol {
            return Ok(ValueTable { grid: engine.grid, values: v, residual: r, residuals });
        }
    }
    Err(Error::NotConverged { iterations: opts.max_iters, residual: residuals.last().copied().unwrap_or(f64::NAN) })
}

/// Value of the lost-sales problem without expiry, over total inventory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonperishableValue {
    /// `values[τ][s]` for `s ∈ 0..=s_cap`.
    pub values: Vec<Vec<f64>>,
    pub policy: Vec<Vec<u16>>,
    pub s_cap: usize,
}

impl NonperishableValue {
    /// `v₁(τ, s)`, with `s` clamped to the table.
    pub fn get(&self, tau: usize, s: usize) -> f64 {
        self.values[tau][s.min(self.s_cap)]
    }
}

pub fn nonperishable_value(scenario: &Scenario, opts: &SolveOptions) -> Result<NonperishableValue> {
    let big_m = scenario.max_order();
    let s_cap = (scenario.m() - 1) * scenario.inventory_cap + big_m;
    let tables = crate::mdp::DemandTables::new(&scenario.demand, s_cap + big_m);
    let c = scenario.costs;
    let period = scenario.period();
    let mut v = vec![vec![0.0; s_cap + 1]; period];
    let mut policy = vec![vec![0u16; s_cap + 1]; period];
    for _ in 0..opts.max_iters {
        let mut next = vec![vec![0.0; s_cap + 1]; period];
        let mut r = 0.0f64;
        for tau in 0..period {
            let vn = &v[(tau + 1) % period];
            let row = scenario.demand.row(tau);
            // continuation for every post-order level
            let cont: Vec<f64> = (0..=s_cap + big_m)
                .map(|lvl| row.iter().enumerate().map(|(d, p)| p * vn[lvl.saturating_sub(d).min(s_cap)]).sum())
                .collect();
            for s in 0..=s_cap {
                let q = |z: usize| {
                    let lvl = s + z;
                    let fixed = if z > 0 { c.fixed } else { 0.0 };
                    fixed + c.holding * tables.over[tau][lvl] + c.shortage * tables.under[tau][lvl] + c.discount * cont[lvl]
                };
                let z = argmin((0..=big_m).map(q));
                next[tau][s] = q(z);
                policy[tau][s] = z as u16;
                r = r.max((next[tau][s] - v[tau][s]).abs());
            }
        }
        v = next;
        if r <= opts.tol {
            return Ok(NonperishableValue { values: v, policy, s_cap });
        }
    }
    Err(Error::NotConverged { iterations: opts.max_iters, residual: f64::NAN })
}

/// Which link of `-1 ≤ Δ_{x_{m-1}}μ ≤ … ≤ Δ_{x_1}μ ≤ 0` fails.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SensitivityClause {
    /// `Δ_{x_{m-1}}μ < -1`.
    Lower,
    /// `Δ_{x_{i+1}}μ > Δ_{x_i}μ` for the stated `i`.
    Order { i: usize },
    /// `Δ_{x_1}μ > 0`.
    Upper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityWitness {
    pub state: InventoryState,
    pub clause: SensitivityClause,
    /// `Δ_{x_i}μ` for `i = 1..m-1`, ascending.
    pub deltas: Vec<i32>,
    /// Some neighbour touches the per-age cap.
    pub boundary: bool,
}

pub fn find_sensitivity_violations(policy: &PolicyTable) -> Vec<SensitivityWitness> {
    let g = policy.grid;
    let mut out = Vec::new();
    for idx in 0..g.len() {
        let state = g.state(idx);
        if state.x.iter().any(|&v| v as usize >= g.cap) {
            continue;
        }
        let mu = policy.actions[idx] as i32;
        let deltas: Vec<i32> = (0..g.m - 1)
            .map(|i| {
                let mut up = state.clone();
                up.x[i] += 1;
                policy.action(&up) as i32 - mu
            })
            .collect();
        let boundary = state.x.iter().any(|&v| v as usize + 1 >= g.cap);
        let mut push = |clause| out.push(SensitivityWitness { state: state.clone(), clause, deltas: deltas.clone(), boundary });
        if deltas[g.m - 2] < -1 {
            push(SensitivityClause::Lower);
        }
        for i in 0..g.m - 2 {
            if deltas[i + 1] > deltas[i] {
                push(SensitivityClause::Order { i: i + 1 });
            }
        }
        if deltas[0] > 0 {
            push(SensitivityClause::Upper);
        }
    }
    out
}

/// Indices `i` where `g(i+1) - 2g(i) + g(i-1) < -1e-9`.
pub fn find_nonconvexity_witnesses(g: &[f64]) -> Vec<usize> {
    (1..g.len().saturating_sub(1)).filter(|&i| g[i + 1] - 2.0 * g[i] + g[i - 1] < -1e-9).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SliceAxis {
    /// Units of remaining shelf-life `i` (1-based).
    Inventory(usize),
    Order,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexityWitness {
    pub state: InventoryState,
    pub axis: SliceAxis,
    /// Position along the axis of the failing midpoint.
    pub at: usize,
    pub second_difference: f64,
}

/// Midpoint-convexity failures of a value table along each inventory axis.
pub fn value_nonconvexity(table: &ValueTable) -> Vec<ConvexityWitness> {
    let g = table.grid;
    let mut out = Vec::new();
    for axis in 1..g.m {
        for idx in 0..g.len() {
            let state = g.state(idx);
            if state.x[axis - 1] != 0 {
                continue;
            }
            let slice: Vec<f64> = (0..=g.cap)
                .map(|k| {
                    let mut s = state.clone();
                    s.x[axis - 1] = k as u32;
                    table.value(&s)
                })
                .collect();
            for at in find_nonconvexity_witnesses(&slice) {
                let mut s = state.clone();
                s.x[axis - 1] = at as u32;
                let second_difference = slice[at + 1] - 2.0 * slice[at] + slice[at - 1];
                out.push(ConvexityWitness { state: s, axis: SliceAxis::Inventory(axis), at, second_difference });
            }
        }
    }
    out
}

/// Midpoint-convexity failures of `z ↦ Q(τ, x, z)` at every state.
pub fn expected_cost_nonconvexity(engine: &Engine, scenario: &Scenario, table: &ValueTable) -> Vec<ConvexityWitness> {
    let g = engine.grid;
    let mut out = Vec::new();
    for idx in 0..g.len() {
        let state = g.state(idx);
        let row = engine.q_row(scenario, &table.values, state.tau, g.index_x(&state.x));
        for at in find_nonconvexity_witnesses(&row) {
            let second_difference = row[at + 1] - 2.0 * row[at] + row[at - 1];
            out.push(ConvexityWitness { state: state.clone(), axis: SliceAxis::Order, at, second_difference });
        }
    }
    out
}

/// Writes `tau,x{m-1},…,x1,value,action`, one row per grid state.
pub fn write_table_csv(w: &mut impl Write, values: &ValueTable, policy: &PolicyTable) -> Result<()> {
    let g = values.grid;
    let cols: Vec<String> = (1..g.m).rev().map(|i| format!("x{i}")).collect();
    writeln!(w, "tau,{},value,action", cols.join(","))?;
    for idx in 0..g.len() {
        let s = g.state(idx);
        let xs: Vec<String> = s.x.iter().rev().map(|v| v.to_string()).collect();
        writeln!(w, "{},{},{:?},{}", s.tau, xs.join(","), values.values[idx], policy.actions[idx])?;
    }
    Ok(())
}

/// Reads the format of [`write_table_csv`] back onto `grid`.
pub fn read_table_csv(r: impl BufRead, grid: StateGrid) -> Result<(ValueTable, PolicyTable)> {
    let mut values = vec![f64::NAN; grid.len()];
    let mut actions = vec![0u16; grid.len()];
    let bad = |line: usize, msg: &str| Error::Config(format!("table csv line {line}: {msg}"));
    for (n, line) in r.lines().enumerate().skip(1) {
        let line = line?;
        let fields: Vec<&str> = line.trim().split(',').collect();
        if fields.len() != grid.m + 2 {
            return Err(bad(n + 1, "wrong column count"));
        }
        let nums: Vec<u32> =
            fields[..grid.m].iter().map(|f| f.parse()).collect::<std::result::Result<_, _>>().map_err(|_| bad(n + 1, "bad integer"))?;
        let x: Vec<u32> = nums[1..].iter().rev().cloned().collect();
        let s = InventoryState::new(nums[0] as usize, x);
        if s.tau >= grid.period || s.x.iter().any(|&v| v as usize > grid.cap) {
            return Err(bad(n + 1, "state outside grid"));
        }
        let idx = grid.index(&s);
        values[idx] = fields[grid.m].parse().map_err(|_| bad(n + 1, "bad value"))?;
        actions[idx] = fields[grid.m + 1].parse().map_err(|_| bad(n + 1, "bad action"))?;
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::Config("table csv does not cover the grid".into()));
    }
    Ok((ValueTable { grid, values, residual: 0.0, residuals: vec![] }, PolicyTable { grid, actions }))
}
