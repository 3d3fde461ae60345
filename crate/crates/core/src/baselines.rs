//! Benchmark policies: myopic, exact optimal, deterministic shelf-life, and
//! policies built on an exogenous (intercept-only) refit of the shelf-life law.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::StageModel;
use crate::error::{Error, Result};
use crate::exact_dp::{value_iteration, SolveOptions, ValueTable};
use crate::mdp::{InventoryState, Scenario};
use crate::policy::{PolicyHandle, PolicyKind};
use crate::rng;
use crate::shelflife::ShelfLifeModel;
use crate::simulate::Simulator;

/// Exact minimizer of the expected single-period cost.
pub fn myopic(state: &InventoryState, scenario: &Scenario) -> usize {
    StageModel::new(scenario).myopic_action(state.tau, state.x[0] as usize, state.total() as usize)
}

pub fn myopic_policy(scenario: &Scenario) -> PolicyHandle {
    PolicyHandle::myopic(scenario)
}

pub fn exact_optimal_policy(scenario: &Scenario, opts: &SolveOptions) -> Result<(ValueTable, PolicyHandle)> {
    let (values, table) = value_iteration(scenario, opts)?;
    Ok((values, PolicyHandle::table(PolicyKind::ExactOptimal, table)))
}

/// Optimal policy of the model in which every unit arrives with shelf-life `m`.
/// The table lives on the same grid, so it can be evaluated under the true model.
pub fn deterministic_shelf_life_policy(scenario: &Scenario, opts: &SolveOptions) -> Result<PolicyHandle> {
    let assumed = scenario.with_shelf_life(ShelfLifeModel::deterministic(scenario.m()));
    let (_, table) = value_iteration(&assumed, opts)?;
    Ok(PolicyHandle::table(PolicyKind::DeterministicShelfLife, table))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Refit {
    pub model: ShelfLifeModel,
    /// Delivered units per shelf-life category (ascending).
    pub counts: Vec<u64>,
    /// Half a unit was added to every category because one was empty.
    pub smoothed: bool,
}

impl Refit {
    pub fn probabilities(&self) -> Vec<f64> {
        self.model.probabilities(0)
    }
}

const REFIT_HORIZON: usize = 100;

/// Simulates `n_periods` of deliveries under `data_policy` and the true model
/// (trajectories of 100 periods from the empty state), then fits the
/// intercept-only logit, whose maximum-likelihood estimate is the empirical
/// category frequency.
pub fn exogenous_refit(scenario: &Scenario, data_policy: &PolicyHandle, n_periods: usize, seed: u64) -> Result<Refit> {
    let m = scenario.m();
    let sim = Simulator::new(scenario);
    let reps = n_periods.div_ceil(REFIT_HORIZON).max(1);
    let path_seed = rng::derive(seed, rng::Purpose::Refit as u64);
    let per_rep: Vec<Vec<u64>> = (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let len = REFIT_HORIZON.min(n_periods - r as usize * REFIT_HORIZON);
            let mut counts = vec![0u64; m];
            sim.run(data_policy, scenario.start_state(), len, path_seed, r, rng::derive(path_seed, 1), None, |p| {
                for (c, &y) in counts.iter_mut().zip(&p.delivery.counts) {
                    *c += y as u64;
                }
            });
            counts
        })
        .collect();
    let mut counts = vec![0u64; m];
    for rep in per_rep {
        for (c, v) in counts.iter_mut().zip(rep) {
            *c += v;
        }
    }
    refit_from_counts(counts)
}

/// Intercept-only fit from category counts.
pub fn refit_from_counts(counts: Vec<u64>) -> Result<Refit> {
    if counts.iter().sum::<u64>() == 0 {
        return Err(Error::NoDeliveryData);
    }
    let smoothed = counts.contains(&0);
    let pseudo: Vec<f64> = counts.iter().map(|&c| c as f64 + if smoothed { 0.5 } else { 0.0 }).collect();
    let intercepts = pseudo[1..].iter().map(|c| (c / pseudo[0]).ln()).collect();
    Ok(Refit { model: ShelfLifeModel::exogenous(intercepts)?, counts, smoothed })
}

/// Exogenous model equal to the true distribution of a zero order, used when
/// a data policy never orders and so reveals nothing about deliveries.
pub fn base_distribution_refit(truth: &ShelfLifeModel) -> Result<Refit> {
    let p = truth.probabilities(0);
    let floor = f64::MIN_POSITIVE;
    let intercepts = p[1..].iter().map(|q| (q.max(floor) / p[0].max(floor)).ln()).collect();
    Ok(Refit { model: ShelfLifeModel::exogenous(intercepts)?, counts: vec![0; p.len()], smoothed: false })
}

/// [`exogenous_refit`], or [`base_distribution_refit`] when the data policy
/// never orders. The flag reports the fallback.
pub fn exogenous_refit_or_base(scenario: &Scenario, data_policy: &PolicyHandle, n_periods: usize, seed: u64) -> Result<(Refit, bool)> {
    match exogenous_refit(scenario, data_policy, n_periods, seed) {
        Err(Error::NoDeliveryData) => Ok((base_distribution_refit(&scenario.shelf_life)?, true)),
        other => Ok((other?, false)),
    }
}

/// Exact optimal policy of the refit model, to be evaluated under the true model.
pub fn exogenous_refit_policy(scenario: &Scenario, refit: &Refit, opts: &SolveOptions) -> Result<PolicyHandle> {
    let assumed = scenario.with_shelf_life(refit.model.clone());
    let (_, table) = value_iteration(&assumed, opts)?;
    Ok(PolicyHandle::table(PolicyKind::ExogenousAdp, table))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demand::PeriodicDemandModel;
    use crate::exact_dp::PolicyTable;
    use crate::mdp::{CostParams, StateGrid};

    fn scenario(shelf: ShelfLifeModel) -> Scenario {
        let costs = CostParams { fixed: 10.0, holding: 1.0, shortage: 20.0, wastage: 5.0, discount: 0.95 };
        Scenario::new(PeriodicDemandModel::weekday(20), shelf, costs).unwrap()
    }

    #[test]
    fn myopic_orders_from_empty_stock() {
        let sc = scenario(ShelfLifeModel::exogenous(vec![1.0, 0.5]).unwrap());
        let z = myopic(&sc.start_state(), &sc);
        assert!(z >= 5, "order {z}");
        assert_eq!(myopic_policy(&sc).order(&sc.start_state(), crate::policy::DecisionKey { seed: 0, replication: 0, period: 0 }), z);
    }

    #[test]
    fn refit_recovers_exogenous_truth() {
        let sc = scenario(ShelfLifeModel::exogenous(vec![1.0, 0.5]).unwrap());
        let refit = exogenous_refit(&sc, &myopic_policy(&sc), 3000, 4).unwrap();
        let truth = sc.shelf_life.probabilities(0);
        let n: u64 = refit.counts.iter().sum();
        for (p, q) in refit.probabilities().iter().zip(&truth) {
            let sd = (q * (1.0 - q) / n as f64).sqrt();
            assert!((p - q).abs() < 3.0 * sd, "{p} vs {q} (sd {sd})");
        }
        assert!(!refit.smoothed);
    }

    #[test]
    fn zero_order_policy_has_no_data() {
        let sc = scenario(ShelfLifeModel::exogenous(vec![1.0, 0.5]).unwrap());
        let grid = StateGrid::new(&sc);
        let zero = PolicyHandle::table(PolicyKind::LookupTable, PolicyTable { grid, actions: vec![0; grid.len()] });
        assert!(matches!(exogenous_refit(&sc, &zero, 500, 1), Err(Error::NoDeliveryData)));
    }

    #[test]
    fn base_refit_matches_zero_order_distribution() {
        let truth = ShelfLifeModel::logit(vec![1.0, 0.5], vec![-0.4, -0.8]).unwrap();
        let r = base_distribution_refit(&truth).unwrap();
        for (a, b) in r.probabilities().iter().zip(truth.probabilities(0)) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(r.model.is_exogenous());
    }

    #[test]
    fn empty_category_is_smoothed() {
        let r = refit_from_counts(vec![0, 10, 30]).unwrap();
        assert!(r.smoothed);
        let p = r.probabilities();
        assert!((p[0] - 0.5 / 41.5).abs() < 1e-12);
        assert!((p[2] - 30.5 / 41.5).abs() < 1e-12);
    }
}
