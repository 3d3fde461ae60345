//! Pipelines shared by the command-line tool and the acceptance suite.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::adp::{run_approximate_policy_iteration, AdpRun};
use crate::baselines::{deterministic_shelf_life_policy, exogenous_refit_or_base, exogenous_refit_policy, myopic_policy, Refit};
use crate::config::ScenarioConfig;
use crate::engine::Engine;
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_paired, evaluate_policy, DemandTrace, EvaluationReport};
use crate::exact_dp::{evaluate_policy_with, nonperishable_value, value_iteration_with, PolicyTable, SolveOptions, ValueTable};
use crate::mdp::Scenario;
use crate::policy::{PolicyHandle, PolicyKind};
use crate::rng;
use crate::stats::Estimate;

/// Exact solution of a small instance, reused to price other policies exactly.
#[derive(Debug, Clone)]
pub struct ExactCase {
    pub scenario: Scenario,
    pub engine: Engine,
    pub values: ValueTable,
    pub policy: PolicyTable,
    pub opts: SolveOptions,
}

impl ExactCase {
    pub fn solve(scenario: Scenario, opts: SolveOptions) -> Result<Self> {
        let engine = opts.engine(&scenario)?;
        let (values, policy) = value_iteration_with(&engine, &scenario, &opts)?;
        Ok(Self { scenario, engine, values, policy, opts })
    }

    /// Optimal expected discounted cost from the empty state on weekday 0.
    pub fn optimum(&self) -> f64 {
        self.values.value(&self.scenario.start_state())
    }

    /// Exact expected discounted cost of `table` from the empty state.
    pub fn cost_of(&self, table: &PolicyTable) -> Result<f64> {
        Ok(evaluate_policy_with(&self.engine, &self.scenario, table, &self.opts)?.value(&self.scenario.start_state()))
    }

    /// Exact percentage optimality gap of a deterministic policy.
    pub fn gap_of(&self, handle: &PolicyHandle) -> Result<f64> {
        let table = handle
            .materialize(self.engine.grid)
            .ok_or_else(|| Error::InvalidParameter(format!("{} policy has no lookup table", handle.kind.label())))?;
        Ok(100.0 * (self.cost_of(&table)? / self.optimum() - 1.0))
    }
}

/// Runs approximate policy iteration with the configured settings.
pub fn train_adp(cfg: &ScenarioConfig, scenario: &Scenario, engine: Option<&Engine>, kind: PolicyKind) -> Result<AdpRun> {
    let v1 = Arc::new(nonperishable_value(scenario, &cfg.solve_options())?);
    run_approximate_policy_iteration(scenario, v1, &cfg.adp_settings(), cfg.seed, engine, kind)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactRow {
    pub scenario: String,
    pub optimal: f64,
    pub deterministic_gap: f64,
    /// Exogenous model refit on data generated by the optimal policy.
    pub refit_optimal_gap: f64,
    /// Exogenous model refit on data generated by the myopic policy.
    pub refit_myopic_gap: f64,
    pub refit_optimal: Refit,
    pub refit_myopic: Refit,
    /// The data policy never ordered, so the zero-order distribution was used.
    pub refit_optimal_fallback: bool,
    pub refit_myopic_fallback: bool,
}

const TAG_REFIT_OPTIMAL: u64 = 0x0F1;
const TAG_REFIT_MYOPIC: u64 = 0x0F2;

/// Exact gaps of the policies that ignore shelf-life uncertainty or its dependence on order size.
pub fn impact_row(cfg: &ScenarioConfig, case: &ExactCase) -> Result<ImpactRow> {
    let sc = &case.scenario;
    let opts = case.opts;
    let det = deterministic_shelf_life_policy(sc, &opts)?;
    let optimal = PolicyHandle::table(PolicyKind::ExactOptimal, case.policy.clone());
    let periods = cfg.evaluation.refit_periods;
    let (refit_optimal, refit_optimal_fallback) = exogenous_refit_or_base(sc, &optimal, periods, rng::derive(cfg.seed, TAG_REFIT_OPTIMAL))?;
    let (refit_myopic, refit_myopic_fallback) =
        exogenous_refit_or_base(sc, &myopic_policy(sc), periods, rng::derive(cfg.seed, TAG_REFIT_MYOPIC))?;
    Ok(ImpactRow {
        scenario: cfg.name.clone(),
        optimal: case.optimum(),
        deterministic_gap: case.gap_of(&det)?,
        refit_optimal_gap: case.gap_of(&exogenous_refit_policy(sc, &refit_optimal, &opts)?)?,
        refit_myopic_gap: case.gap_of(&exogenous_refit_policy(sc, &refit_myopic, &opts)?)?,
        refit_optimal,
        refit_myopic,
        refit_optimal_fallback,
        refit_myopic_fallback,
    })
}

/// Simulated counterpart of [`impact_row`] for instances too large to solve
/// exactly: gaps are relative to the endogenous ADP policy on common streams.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedImpactRow {
    pub scenario: String,
    pub endogenous: Estimate,
    pub deterministic: Estimate,
    pub exogenous: Estimate,
    pub deterministic_gap: Estimate,
    pub exogenous_gap: Estimate,
    pub refit: Refit,
    pub refit_fallback: bool,
}

pub fn impact_row_simulated(cfg: &ScenarioConfig, scenario: &Scenario) -> Result<SimulatedImpactRow> {
    let opts = SolveOptions { allow_large: true, ..cfg.solve_options() };
    let endog = train_adp(cfg, scenario, None, PolicyKind::EndogenousAdp)?;
    let det = deterministic_shelf_life_policy(scenario, &opts)?;
    let (refit, refit_fallback) =
        exogenous_refit_or_base(scenario, &myopic_policy(scenario), cfg.evaluation.refit_periods, rng::derive(cfg.seed, TAG_REFIT_MYOPIC))?;
    let assumed = scenario.with_shelf_life(refit.model.clone());
    let exog = train_adp(cfg, &assumed, None, PolicyKind::ExogenousAdp)?;
    // The exogenous policy was trained on the refit model but acts in the true one.
    let exog_policy = crate::adp::greedy_policy(scenario, exog.best.clone(), exog.mode, None, PolicyKind::ExogenousAdp)?;
    let e = &cfg.evaluation;
    let start = scenario.start_state();
    let vs_det = evaluate_paired(&det, &endog.policy, scenario, &start, e.horizon, e.replications, cfg.seed, None)?;
    let vs_exog = evaluate_paired(&exog_policy, &endog.policy, scenario, &start, e.horizon, e.replications, cfg.seed, None)?;
    let rel = |d: &Estimate, base: &Estimate| Estimate {
        mean: 100.0 * d.mean / base.mean,
        std_err: 100.0 * d.std_err / base.mean,
        half_width: 100.0 * d.half_width / base.mean,
        n: d.n,
    };
    Ok(SimulatedImpactRow {
        scenario: cfg.name.clone(),
        endogenous: vs_det.b.cost,
        deterministic: vs_det.a.cost,
        exogenous: vs_exog.a.cost,
        deterministic_gap: rel(&vs_det.cost_difference, &vs_det.b.cost),
        exogenous_gap: rel(&vs_exog.cost_difference, &vs_exog.b.cost),
        refit,
        refit_fallback,
    })
}

/// Loads the configured trace, or samples a synthetic one from the demand model.
pub fn demand_trace(cfg: &ScenarioConfig, scenario: &Scenario) -> Result<DemandTrace> {
    match &cfg.evaluation.trace {
        Some(path) => {
            let file = std::fs::File::open(path)?;
            DemandTrace::parse(std::io::BufReader::new(file))
        }
        None => Ok(DemandTrace::synthetic(scenario, 0, cfg.evaluation.trace_length, rng::derive(cfg.seed, 0x7ACE))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvaluation {
    pub policy: String,
    pub report: EvaluationReport,
}

/// Replays `trace` under each policy with common shelf-life streams.
pub fn evaluate_on_trace(
    policies: &[&PolicyHandle],
    scenario: &Scenario,
    trace: &DemandTrace,
    replications: usize,
    seed: u64,
) -> Result<Vec<TraceEvaluation>> {
    policies
        .iter()
        .map(|p| {
            Ok(TraceEvaluation {
                policy: p.kind.label().to_string(),
                report: crate::evaluation::evaluate_on_demand_trace(p, scenario, trace, replications, seed)?,
            })
        })
        .collect()
}

/// Monte-Carlo evaluation from the empty state with the configured budget.
pub fn evaluate_from_start(cfg: &ScenarioConfig, scenario: &Scenario, policy: &PolicyHandle) -> Result<EvaluationReport> {
    let e = &cfg.evaluation;
    evaluate_policy(policy, scenario, &scenario.start_state(), e.horizon, e.replications, cfg.seed)
}
