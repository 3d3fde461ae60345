//! Information-relaxation lower bound.
//!
//! The discounted problem is rewritten as an undiscounted one whose horizon is
//! Geometric with success probability `1 - α`. The relaxation reveals the
//! horizon and, for every period and every possible order size, the delivered
//! shelf-life vector; demand stays random. Each revealed instance is solved by
//! backward induction over the weekday layers it visits.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{Engine, EngineLimits};
use crate::error::Result;
use crate::exact_dp::PolicyTable;
use crate::mdp::{InventoryState, Scenario};
use crate::rng::{self, Purpose};
use crate::shelflife::DeliverySampler;
use crate::stats::Estimate;

/// `T = ⌊ln(1-u) / ln α⌋`, so `P(T = t) = (1-α) α^t`.
pub fn sample_horizon(alpha: f64, u: f64) -> usize {
    if alpha <= 0.0 {
        return 0;
    }
    ((1.0 - u).ln() / alpha.ln()).floor() as usize
}

/// Horizon and per-period delivery uniforms of one relaxed instance.
#[derive(Debug, Clone, PartialEq)]
pub struct RevealedScenario {
    pub horizon: usize,
    /// `horizon + 1` blocks of `M` uniforms.
    pub blocks: Vec<Vec<f64>>,
}

impl RevealedScenario {
    pub fn sample(scenario: &Scenario, seed: u64, replication: u64) -> Self {
        let mut rng = rng::stream(seed, Purpose::Relaxation, replication, 0);
        let horizon = sample_horizon(scenario.costs.discount, rng.random::<f64>());
        let big_m = scenario.max_order();
        let blocks = (0..=horizon)
            .map(|_| {
                let mut b = vec![0.0; big_m];
                rng::fill_uniform(&mut rng, &mut b);
                b
            })
            .collect();
        Self { horizon, blocks }
    }

    fn deliveries(&self, sampler: &DeliverySampler, t: usize, m: usize, max_order: usize) -> Vec<Vec<u32>> {
        (0..=max_order)
            .map(|z| {
                let mut y = vec![0u32; m];
                sampler.sample_into(z, &self.blocks[t], &mut y);
                y
            })
            .collect()
    }
}

/// Precomputed pieces shared by every replication.
#[derive(Debug, Clone)]
pub struct Relaxation<'a> {
    pub scenario: &'a Scenario,
    engine: Engine,
    sampler: DeliverySampler,
}

impl<'a> Relaxation<'a> {
    pub fn new(scenario: &'a Scenario, limits: EngineLimits) -> Result<Self> {
        let engine = Engine::without_deliveries(scenario, limits)?;
        Ok(Self { scenario, engine, sampler: DeliverySampler::new(&scenario.shelf_life, scenario.max_order()) })
    }

    /// Backward induction; `rule` fixes the order per state (`None` optimizes).
    fn solve(&self, revealed: &RevealedScenario, start: &InventoryState, rule: Option<&PolicyTable>) -> f64 {
        let sc = self.scenario;
        let e = &self.engine;
        let n = e.grid.per_period();
        let (m, big_m) = (sc.m(), sc.max_order());
        let mut w = vec![0.0; n];
        let mut next = vec![0.0; n];
        let mut u = Vec::new();
        for t in (0..=revealed.horizon).rev() {
            let tau = (start.tau + t) % sc.period();
            let ys = revealed.deliveries(&self.sampler, t, m, big_m);
            e.continuation(sc.demand.cdf_row(tau), &w, &mut u);
            let u = u.as_slice();
            next.par_iter_mut().enumerate().for_each(|(xi, out)| {
                *out = match rule {
                    Some(p) => {
                        let z = p.actions[tau * n + xi] as usize;
                        e.q_revealed(tau, xi, z, &ys[z], u, 1.0)
                    }
                    None => (0..=big_m).map(|z| e.q_revealed(tau, xi, z, &ys[z], u, 1.0)).fold(f64::INFINITY, f64::min),
                };
            });
            std::mem::swap(&mut w, &mut next);
        }
        w[e.grid.index_x(&start.x)]
    }

    /// Optimal undiscounted expected cost of the revealed instance.
    pub fn relaxed_value(&self, revealed: &RevealedScenario, start: &InventoryState) -> f64 {
        self.solve(revealed, start, None)
    }

    /// Expected cost of a fixed state-feedback policy on the same revealed instance.
    pub fn policy_value(&self, revealed: &RevealedScenario, start: &InventoryState, policy: &PolicyTable) -> f64 {
        self.solve(revealed, start, Some(policy))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowerBound {
    pub estimate: Estimate,
    pub mean_horizon: f64,
}

pub fn lower_bound(scenario: &Scenario, start: &InventoryState, n_reps: usize, seed: u64, limits: EngineLimits) -> Result<LowerBound> {
    if n_reps < 2 {
        return Err(crate::error::Error::InvalidParameter("lower bound needs at least 2 replications".into()));
    }
    scenario.check_state(start)?;
    let relax = Relaxation::new(scenario, limits)?;
    let draws: Vec<(f64, usize)> = (0..n_reps as u64)
        .into_par_iter()
        .map(|r| {
            let rev = RevealedScenario::sample(scenario, seed, r);
            (relax.relaxed_value(&rev, start), rev.horizon)
        })
        .collect();
    let values: Vec<f64> = draws.iter().map(|d| d.0).collect();
    let mean_horizon = draws.iter().map(|d| d.1 as f64).sum::<f64>() / n_reps as f64;
    Ok(LowerBound { estimate: Estimate::from_samples(&values), mean_horizon })
}
