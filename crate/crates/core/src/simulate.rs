//! Trajectory simulation with per-period common random numbers.
//!
//! Each period draws `M` delivery uniforms and one demand uniform from the
//! replication's path stream whatever the chosen order, so two policies run
//! on the same `(seed, replication)` see identical demand and unit-level
//! shelf-life draws.

use crate::mdp::{InventoryState, Scenario, StepOutcome};
use crate::policy::{DecisionKey, PolicyHandle};
use crate::rng::{self, Purpose};
use crate::shelflife::{DeliverySampler, DeliveryVector};

#[derive(Debug, Clone)]
pub struct Simulator<'a> {
    pub scenario: &'a Scenario,
    sampler: DeliverySampler,
}

/// One simulated period.
#[derive(Debug, Clone)]
pub struct Period<'s> {
    pub t: usize,
    pub state: &'s InventoryState,
    pub order: usize,
    pub delivery: &'s DeliveryVector,
    pub demand: usize,
    pub outcome: &'s StepOutcome,
}

impl<'a> Simulator<'a> {
    pub fn new(scenario: &'a Scenario) -> Self {
        Self { scenario, sampler: DeliverySampler::new(&scenario.shelf_life, scenario.max_order()) }
    }

    /// Runs `horizon` periods. Demand comes from `demand_override` when given
    /// (values clamped to `M` by the caller), otherwise from the path stream.
    #[allow(clippy::too_many_arguments)]
    pub fn run(
        &self,
        policy: &PolicyHandle,
        start: InventoryState,
        horizon: usize,
        path_seed: u64,
        replication: u64,
        decision_seed: u64,
        demand_override: Option<&[usize]>,
        mut visit: impl FnMut(Period<'_>),
    ) {
        let sc = self.scenario;
        let big_m = sc.max_order();
        let m = sc.m();
        let mut path = rng::stream(path_seed, Purpose::Path, replication, 0);
        let mut u = vec![0.0; big_m + 1];
        let mut state = start;
        let mut y = DeliveryVector::zeros(m);
        for t in 0..horizon {
            rng::fill_uniform(&mut path, &mut u);
            let key = DecisionKey { seed: decision_seed, replication, period: t as u64 };
            let z = policy.order(&state, key).min(big_m);
            self.sampler.sample_into(z, &u[..big_m], &mut y.counts);
            let d = match demand_override {
                Some(trace) => trace[t],
                None => sc.demand.sample(state.tau, u[big_m]),
            };
            let outcome = crate::mdp::step(sc, &state, z, &y, d);
            visit(Period { t, state: &state, order: z, delivery: &y, demand: d, outcome: &outcome });
            state = outcome.next;
        }
    }
}

/// Discounted tail sums `c_t = Σ_{s≥t} α^{s-t} cost_s`.
pub fn discounted_tail_sums(costs: &[f64], alpha: f64) -> Vec<f64> {
    let mut out = vec![0.0; costs.len()];
    let mut acc = 0.0;
    for t in (0..costs.len()).rev() {
        acc = costs[t] + alpha * acc;
        out[t] = acc;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tail_sums() {
        let c = discounted_tail_sums(&[1.0, 2.0, 4.0], 0.5);
        assert_eq!(c, vec![1.0 + 0.5 * 2.0 + 0.25 * 4.0, 2.0 + 2.0, 4.0]);
    }

    /// Two-state chain: state 0 costs 1, state 1 costs 3, switching w.p. 0.3.
    /// Closed form: v = (I - αP)^{-1} c.
    #[test]
    fn tail_sum_estimator_is_unbiased_on_two_state_chain() {
        use rand::Rng;
        let alpha: f64 = 0.8;
        let (p, c): (f64, [f64; 2]) = (0.3, [1.0, 3.0]);
        let det = (1.0 - alpha * (1.0 - p)).powi(2) - (alpha * p).powi(2);
        let v0 = ((1.0 - alpha * (1.0 - p)) * c[0] + alpha * p * c[1]) / det;
        let mut rng = rng::stream(11, Purpose::Path, 0, 0);
        let horizon = 120;
        let samples: Vec<f64> = (0..10_000)
            .map(|_| {
                let mut s = 0usize;
                let costs: Vec<f64> = (0..horizon)
                    .map(|_| {
                        let cost = c[s];
                        if rng.random::<f64>() < p {
                            s = 1 - s;
                        }
                        cost
                    })
                    .collect();
                discounted_tail_sums(&costs, alpha)[0]
            })
            .collect();
        let e = crate::stats::Estimate::from_samples(&samples);
        assert!((e.mean - v0).abs() < 3.0 * e.std_err, "{} vs {v0} (se {})", e.mean, e.std_err);
    }
}
