//! Exact one-step expectations on the truncated state grid.
//!
//! With `b = (a_2, ..., a_m)` the post-delivery stock above the oldest bucket and
//! `s = a_1`, the demand expectation of the next-period value only depends on
//! `(b, s)`:
//!
//! `U(b, s) = Σ_d p(d) V(consume((d - s)^+, b))`.
//!
//! Peeling one unit off the oldest nonempty bucket `j` of `b` gives
//! `U(b, s) = F(s) [V(b) - V(b - e_j)] + U(b - e_j, s + 1)`, with `U(b, s) = V(b)`
//! once `s` reaches the demand truncation. One table per weekday therefore costs
//! `|b| (M + 1)` operations, after which each `(state, order, delivery)` triple is a
//! single lookup.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mdp::{CostParams, DemandTables, Scenario, StateGrid};
use crate::shelflife::ShelfLifeModel;

/// Size guards for the exact engine.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EngineLimits {
    /// Largest number of delivery outcomes enumerated for one order size.
    pub max_support: usize,
    /// Largest continuation table (entries).
    pub max_table: usize,
    /// Largest state grid (entries).
    pub max_states: usize,
}

impl Default for EngineLimits {
    fn default() -> Self {
        Self { max_support: 500, max_table: 1 << 25, max_states: 1 << 22 }
    }
}

/// Single-period quantities, valid for any `m`.
#[derive(Debug, Clone)]
pub struct StageModel {
    pub costs: CostParams,
    pub m: usize,
    pub period: usize,
    pub cap: usize,
    /// Demand truncation, also the largest order.
    pub max_order: usize,
    pub tables: DemandTables,
    /// Law of `y_1` per order size: Binomial(z, p_1(z)), zero-mass entries dropped.
    oldest: Vec<Vec<(u32, f64)>>,
}

impl StageModel {
    pub fn new(scenario: &Scenario) -> Self {
        let m = scenario.m();
        let cap = scenario.inventory_cap;
        let max_order = scenario.max_order();
        let s_max = (m - 1) * cap + max_order;
        let oldest = (0..=max_order).map(|z| binomial_pmf(z, scenario.shelf_life.probabilities(z)[0])).collect();
        Self {
            costs: scenario.costs,
            m,
            period: scenario.period(),
            cap,
            max_order,
            tables: DemandTables::new(&scenario.demand, s_max),
            oldest,
        }
    }

    /// Fixed, holding and shortage parts of the expected stage cost.
    #[inline]
    pub fn base(&self, tau: usize, total_before: usize, z: usize) -> f64 {
        let s = total_before + z;
        let c = &self.costs;
        let fixed = if z > 0 { c.fixed } else { 0.0 };
        fixed + c.holding * self.tables.over[tau][s] + c.shortage * self.tables.under[tau][s]
    }

    /// Expected single-period cost.
    #[inline]
    pub fn expected_cost(&self, tau: usize, oldest: usize, total_before: usize, z: usize) -> f64 {
        let over = &self.tables.over[tau];
        let waste: f64 = self.oldest[z].iter().map(|&(y1, p)| p * over[oldest + y1 as usize]).sum();
        self.base(tau, total_before, z) + self.costs.wastage * waste
    }

    /// Minimizer of the expected single-period cost (smallest on ties).
    pub fn myopic_action(&self, tau: usize, oldest: usize, total_before: usize) -> usize {
        argmin((0..=self.max_order).map(|z| self.expected_cost(tau, oldest, total_before, z)))
    }
}

/// First index of the smallest value.
#[inline]
pub fn argmin(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, v) in values.enumerate() {
        if v < best.1 {
            best = (i, v);
        }
    }
    best.0
}

fn binomial_pmf(n: usize, p: f64) -> Vec<(u32, f64)> {
    let mut coef = 1.0f64;
    let mut out = Vec::with_capacity(n + 1);
    for k in 0..=n {
        if k > 0 {
            coef *= (n - k + 1) as f64 / k as f64;
        }
        let mass = coef * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32);
        if mass > 0.0 {
            out.push((k as u32, mass));
        }
    }
    out
}

#[derive(Debug, Clone, Copy)]
struct Delivery {
    offset: u32,
    oldest: u32,
    prob: f64,
}

/// Exact expectation engine over the full truncated grid.
#[derive(Debug, Clone)]
pub struct Engine {
    pub stage: StageModel,
    pub grid: StateGrid,
    b_strides: Vec<usize>,
    b_len: usize,
    /// Stride of the oldest nonempty coordinate of each `b` (0 for the empty vector).
    b_first: Vec<u32>,
    /// Grid index of the clamped inventory left when nothing of `b` is consumed.
    b_state: Vec<u32>,
    x_base: Vec<u32>,
    x_oldest: Vec<u32>,
    x_total: Vec<u32>,
    deliveries: Vec<Vec<Delivery>>,
}

impl Engine {
    pub fn new(scenario: &Scenario, limits: EngineLimits) -> Result<Self> {
        Self::build(scenario, &scenario.shelf_life, limits, true)
    }

    /// Engine whose `b` grid covers every delivery but without enumerated
    /// delivery laws; used with revealed deliveries.
    pub fn without_deliveries(scenario: &Scenario, limits: EngineLimits) -> Result<Self> {
        Self::build(scenario, &scenario.shelf_life, limits, false)
    }

    fn build(scenario: &Scenario, shelf: &ShelfLifeModel, limits: EngineLimits, enumerate: bool) -> Result<Self> {
        let stage = StageModel::new(scenario);
        let grid = StateGrid::new(scenario);
        let (m, cap, big_m) = (stage.m, stage.cap, stage.max_order);
        if grid.len() > limits.max_states {
            return Err(Error::StateSpaceTooLarge { states: grid.len(), limit: limits.max_states });
        }
        let dims: Vec<usize> = (1..m)
            .map(|i| {
                let k = i + 1;
                let carried = if k < m { cap } else { 0 };
                let fresh = if shelf.category_possible(k) { big_m } else { 0 };
                carried + fresh + 1
            })
            .collect();
        let mut b_strides = Vec::with_capacity(m - 1);
        let mut b_len = 1usize;
        for &d in &dims {
            b_strides.push(b_len);
            b_len = b_len.saturating_mul(d);
        }
        let table = b_len.saturating_mul(big_m + 1);
        if table > limits.max_table {
            return Err(Error::StateSpaceTooLarge { states: table, limit: limits.max_table });
        }

        let mut b_first = vec![0u32; b_len];
        let mut b_state = vec![0u32; b_len];
        let mut coords = vec![0usize; m - 1];
        let mut clamped = vec![0u32; m - 1];
        for b in 0..b_len {
            let mut rest = b;
            for (i, c) in coords.iter_mut().enumerate() {
                *c = rest % dims[i];
                rest /= dims[i];
                clamped[i] = (*c).min(cap) as u32;
            }
            b_first[b] = coords.iter().position(|&c| c > 0).map_or(0, |i| b_strides[i] as u32);
            b_state[b] = grid.index_x(&clamped) as u32;
        }

        let n_x = grid.per_period();
        let mut x = vec![0u32; m - 1];
        let (mut x_base, mut x_oldest, mut x_total) = (Vec::with_capacity(n_x), Vec::with_capacity(n_x), Vec::with_capacity(n_x));
        for xi in 0..n_x {
            grid.decode_x(xi, &mut x);
            x_base.push((1..m - 1).map(|i| x[i] as usize * b_strides[i - 1]).sum::<usize>() as u32);
            x_oldest.push(x[0]);
            x_total.push(x.iter().sum());
        }

        let mut deliveries = Vec::new();
        if enumerate {
            for z in 0..=big_m {
                let needed = shelf.support_size(z);
                if needed > limits.max_support {
                    return Err(Error::BudgetExceeded { needed, budget: limits.max_support });
                }
                let list = shelf
                    .support(z)
                    .into_iter()
                    .map(|(y, prob)| Delivery {
                        offset: (1..m).map(|i| y.counts[i] as usize * b_strides[i - 1]).sum::<usize>() as u32,
                        oldest: y.counts[0],
                        prob,
                    })
                    .collect();
                deliveries.push(list);
            }
        }

        Ok(Self { stage, grid, b_strides, b_len, b_first, b_state, x_base, x_oldest, x_total, deliveries })
    }

    pub fn period(&self) -> usize {
        self.stage.period
    }

    fn s_dim(&self) -> usize {
        self.stage.max_order + 1
    }

    /// Continuation table for demand in period `tau`, given next-period values `v_next`
    /// (one weekday block of the grid).
    pub fn continuation(&self, cdf: &[f64], v_next: &[f64], u: &mut Vec<f64>) {
        let sd = self.s_dim();
        let top = sd - 1;
        u.clear();
        u.resize(self.b_len * sd, 0.0);
        for b in 0..self.b_len {
            let vb = v_next[self.b_state[b] as usize];
            let row = b * sd;
            let j = self.b_first[b] as usize;
            if j == 0 {
                u[row..row + sd].iter_mut().for_each(|e| *e = vb);
                continue;
            }
            let prev = b - j;
            let diff = vb - v_next[self.b_state[prev] as usize];
            let prow = prev * sd;
            for s in 0..top {
                u[row + s] = cdf[s] * diff + u[prow + s + 1];
            }
            u[row + top] = vb;
        }
    }

    /// Expected cost-to-go of ordering `z` in weekday `tau` from inventory index `xi`.
    /// `u` is the continuation table of `tau`; `None` means zero continuation.
    #[inline]
    pub fn q(&self, tau: usize, xi: usize, z: usize, u: Option<&[f64]>, alpha: f64) -> f64 {
        let oldest = self.x_oldest[xi] as usize;
        let total = self.x_total[xi] as usize;
        let Some(u) = u else {
            return self.stage.expected_cost(tau, oldest, total, z);
        };
        let sd = self.s_dim();
        let over = &self.stage.tables.over[tau];
        let theta = self.stage.costs.wastage;
        let base = self.x_base[xi] as usize;
        let mut acc = 0.0;
        for o in &self.deliveries[z] {
            let s = oldest + o.oldest as usize;
            let cont = u[(base + o.offset as usize) * sd + s.min(sd - 1)];
            acc += o.prob * (theta * over[s] + alpha * cont);
        }
        self.stage.base(tau, total, z) + acc
    }

    /// Same as [`q`](Self::q) for a known delivery `y` (ascending shelf-life counts).
    #[inline]
    pub fn q_revealed(&self, tau: usize, xi: usize, z: usize, y: &[u32], u: &[f64], alpha: f64) -> f64 {
        let oldest = self.x_oldest[xi] as usize + y[0] as usize;
        let sd = self.s_dim();
        let offset: usize = (1..self.stage.m).map(|i| y[i] as usize * self.b_strides[i - 1]).sum();
        let cont = u[(self.x_base[xi] as usize + offset) * sd + oldest.min(sd - 1)];
        let total = self.x_total[xi] as usize;
        self.stage.base(tau, total, z) + self.stage.costs.wastage * self.stage.tables.over[tau][oldest] + alpha * cont
    }

    /// Best order and its value for one state.
    #[inline]
    pub fn best(&self, tau: usize, xi: usize, u: Option<&[f64]>, alpha: f64) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for z in 0..=self.stage.max_order {
            let q = self.q(tau, xi, z, u, alpha);
            if q < best.1 {
                best = (z, q);
            }
        }
        best
    }

    fn next_block<'a>(&self, v: &'a [f64], tau: usize) -> &'a [f64] {
        let n = self.grid.per_period();
        let t = (tau + 1) % self.period();
        &v[t * n..(t + 1) * n]
    }

    /// One Jacobi Bellman sweep. Returns the new values and the greedy policy.
    pub fn bellman(&self, scenario: &Scenario, v: &[f64]) -> (Vec<f64>, Vec<u16>) {
        let alpha = self.stage.costs.discount;
        let n = self.grid.per_period();
        let mut out = vec![0.0; v.len()];
        let mut policy = vec![0u16; v.len()];
        let mut u = Vec::new();
        for tau in 0..self.period() {
            let cont = if alpha > 0.0 {
                self.continuation(scenario.demand.cdf_row(tau), self.next_block(v, tau), &mut u);
                Some(u.as_slice())
            } else {
                None
            };
            out[tau * n..(tau + 1) * n].par_iter_mut().zip(policy[tau * n..(tau + 1) * n].par_iter_mut()).enumerate().for_each(
                |(xi, (val, act))| {
                    let (z, q) = self.best(tau, xi, cont, alpha);
                    *val = q;
                    *act = z as u16;
                },
            );
        }
        (out, policy)
    }

    /// One sweep of the evaluation operator of a fixed policy.
    pub fn evaluate(&self, scenario: &Scenario, v: &[f64], policy: &[u16]) -> Vec<f64> {
        let alpha = self.stage.costs.discount;
        let n = self.grid.per_period();
        let mut out = vec![0.0; v.len()];
        let mut u = Vec::new();
        for tau in 0..self.period() {
            self.continuation(scenario.demand.cdf_row(tau), self.next_block(v, tau), &mut u);
            let u = u.as_slice();
            out[tau * n..(tau + 1) * n].par_iter_mut().enumerate().for_each(|(xi, val)| {
                let z = policy[tau * n + xi] as usize;
                *val = self.q(tau, xi, z, Some(u), alpha);
            });
        }
        out
    }

    /// Greedy policy against a value table on the grid (`None`: zero continuation).
    pub fn greedy_policy(&self, scenario: &Scenario, v: Option<&[f64]>) -> Vec<u16> {
        let alpha = self.stage.costs.discount;
        let n = self.grid.per_period();
        let mut policy = vec![0u16; self.grid.len()];
        let mut u = Vec::new();
        for tau in 0..self.period() {
            let cont = match v {
                Some(v) if alpha > 0.0 => {
                    self.continuation(scenario.demand.cdf_row(tau), self.next_block(v, tau), &mut u);
                    Some(u.as_slice())
                }
                _ => None,
            };
            policy[tau * n..(tau + 1) * n].par_iter_mut().enumerate().for_each(|(xi, act)| *act = self.best(tau, xi, cont, alpha).0 as u16);
        }
        policy
    }

    /// All order values `Q(τ, x, ·)` for one state against a value table.
    pub fn q_row(&self, scenario: &Scenario, v: &[f64], tau: usize, xi: usize) -> Vec<f64> {
        let mut u = Vec::new();
        self.continuation(scenario.demand.cdf_row(tau), self.next_block(v, tau), &mut u);
        let alpha = self.stage.costs.discount;
        (0..=self.stage.max_order).map(|z| self.q(tau, xi, z, Some(&u), alpha)).collect()
    }
}
