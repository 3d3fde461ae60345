//! Linear value-function approximation and simulation-based approximate
//! policy iteration.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{Engine, EngineLimits};
use crate::error::{Error, Result};
use crate::exact_dp::{NonperishableValue, PolicyTable};
use crate::mdp::{expectation_over_outcomes, InventoryState, Scenario, StateGrid};
use crate::policy::{MonteCarloGreedy, MyopicTable, PolicyHandle, PolicyKind, PolicyRule};
use crate::rng::{self, Purpose};
use crate::simulate::{discounted_tail_sums, Simulator};
use crate::stats::Estimate;

/// Feature family. Order: `[1, v₁(τ, Σx)]`, then for `j = m-1, …, 1` the
/// powers of `x_j` (one, two or three of them), and for choice 4 the
/// products `x_j x_k` for `j > k`, `j` descending then `k` descending.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub choice: u8,
    pub m: usize,
}

impl BasisSpec {
    pub fn new(choice: u8, m: usize) -> Result<Self> {
        if !(1..=4).contains(&choice) || m < 2 {
            return Err(Error::InvalidParameter(format!("basis choice must be 1..=4 and m >= 2 (got {choice}, {m})")));
        }
        Ok(Self { choice, m })
    }

    fn powers(&self) -> usize {
        match self.choice {
            1 => 1,
            3 => 3,
            _ => 2,
        }
    }

    pub fn len(&self) -> usize {
        let n = self.m - 1;
        let inter = if self.choice == 4 { n * (n - 1) / 2 } else { 0 };
        2 + n * self.powers() + inter
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn names(&self) -> Vec<String> {
        let mut out = vec!["const".to_string(), "v1".to_string()];
        for j in (1..self.m).rev() {
            out.push(format!("x{j}"));
            for p in 2..=self.powers() {
                out.push(format!("x{j}^{p}"));
            }
        }
        if self.choice == 4 {
            for j in (1..self.m).rev() {
                for k in (1..j).rev() {
                    out.push(format!("x{j}*x{k}"));
                }
            }
        }
        out
    }

    /// Writes the feature vector for inventory `x` (ascending) given `v₁(τ, Σx)`.
    pub fn write_features(&self, v1: f64, x: &[u32], out: &mut Vec<f64>) {
        out.clear();
        out.push(1.0);
        out.push(v1);
        for j in (0..self.m - 1).rev() {
            let xj = x[j] as f64;
            let mut p = xj;
            for _ in 0..self.powers() {
                out.push(p);
                p *= xj;
            }
        }
        if self.choice == 4 {
            for j in (0..self.m - 1).rev() {
                for k in (0..j).rev() {
                    out.push(x[j] as f64 * x[k] as f64);
                }
            }
        }
    }
}

/// `v̂(τ, x) = β_τ · φ(τ, x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueApprox {
    pub basis: BasisSpec,
    /// One coefficient vector per weekday.
    pub coefficients: Vec<Vec<f64>>,
    v1: Arc<NonperishableValue>,
}

/// Serialized form of a [`ValueApprox`]; the nonperishable table is rebuilt from the scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueApproxFile {
    pub basis: BasisSpec,
    pub features: Vec<String>,
    pub coefficients: Vec<Vec<f64>>,
}

impl ValueApprox {
    pub fn zero(basis: BasisSpec, period: usize, v1: Arc<NonperishableValue>) -> Self {
        Self { basis, coefficients: vec![vec![0.0; basis.len()]; period], v1 }
    }

    pub fn with_coefficients(&self, coefficients: Vec<Vec<f64>>) -> Self {
        Self { coefficients, ..self.clone() }
    }

    pub fn nonperishable(&self) -> &NonperishableValue {
        &self.v1
    }

    pub fn features(&self, tau: usize, x: &[u32]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.basis.len());
        let total: u32 = x.iter().sum();
        self.basis.write_features(self.v1.get(tau, total as usize), x, &mut out);
        out
    }

    /// Allocation-free evaluation in the documented feature order.
    #[inline]
    pub fn value(&self, tau: usize, x: &[u32]) -> f64 {
        let b = &self.coefficients[tau];
        let total: u32 = x.iter().sum();
        let mut acc = b[0] + b[1] * self.v1.get(tau, total as usize);
        let mut k = 2;
        let powers = self.basis.powers();
        for j in (0..x.len()).rev() {
            let xj = x[j] as f64;
            let mut p = xj;
            for _ in 0..powers {
                acc += b[k] * p;
                p *= xj;
                k += 1;
            }
        }
        if self.basis.choice == 4 {
            for j in (0..x.len()).rev() {
                for i in (0..j).rev() {
                    acc += b[k] * x[j] as f64 * x[i] as f64;
                    k += 1;
                }
            }
        }
        acc
    }

    pub fn is_zero(&self) -> bool {
        self.coefficients.iter().flatten().all(|&c| c == 0.0)
    }

    /// Values on every grid state.
    pub fn tabulate(&self, grid: &StateGrid) -> Vec<f64> {
        (0..grid.len())
            .into_par_iter()
            .map(|idx| {
                let s = grid.state(idx);
                self.value(s.tau, &s.x)
            })
            .collect()
    }

    /// Sum of all coefficients; a cheap fingerprint for run logs.
    pub fn checksum(&self) -> f64 {
        self.coefficients.iter().flatten().sum()
    }

    pub fn to_file(&self) -> ValueApproxFile {
        ValueApproxFile { basis: self.basis, features: self.basis.names(), coefficients: self.coefficients.clone() }
    }

    pub fn from_file(file: ValueApproxFile, v1: Arc<NonperishableValue>) -> Result<Self> {
        if file.coefficients.iter().any(|c| c.len() != file.basis.len() || c.iter().any(|v| !v.is_finite())) {
            return Err(Error::Config("coefficient vectors do not match the basis".into()));
        }
        if file.coefficients.len() != v1.values.len() {
            return Err(Error::Config("coefficient vectors do not match the demand period".into()));
        }
        Ok(Self { basis: file.basis, coefficients: file.coefficients, v1 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GreedyMode {
    /// Exact expectation over all deliveries and demands.
    Exact,
    /// Sample average over `samples` common uniform blocks.
    MonteCarlo { samples: usize },
}

/// Greedy order for one state. For Monte Carlo, `uniforms` holds the sample
/// blocks (`M` delivery uniforms then one demand uniform per sample).
pub fn greedy_action(
    state: &InventoryState,
    approx: &ValueApprox,
    scenario: &Scenario,
    mode: GreedyMode,
    uniforms: &[f64],
    budget: usize,
) -> Result<usize> {
    let values: Vec<f64> = match mode {
        GreedyMode::Exact => (0..=scenario.max_order())
            .map(|z| expectation_over_outcomes(scenario, state, z, budget, |n| approx.value(n.tau, &n.x)))
            .collect::<Result<_>>()?,
        GreedyMode::MonteCarlo { samples } => {
            let g = MonteCarloGreedy::new(scenario, Arc::new(approx.clone()), samples);
            g.q_values(state, uniforms)
        }
    };
    Ok(crate::engine::argmin(values.into_iter()))
}

/// Greedy policy against `approx`. An all-zero approximation yields the
/// exact myopic rule in either mode.
pub fn greedy_policy(
    scenario: &Scenario,
    approx: Arc<ValueApprox>,
    mode: GreedyMode,
    engine: Option<&Engine>,
    kind: PolicyKind,
) -> Result<PolicyHandle> {
    let rule = if approx.is_zero() {
        PolicyRule::Myopic(Arc::new(MyopicTable::new(scenario)))
    } else {
        match mode {
            GreedyMode::Exact => {
                let owned;
                let engine = match engine {
                    Some(e) => e,
                    None => {
                        owned = Engine::new(scenario, EngineLimits::default())?;
                        &owned
                    }
                };
                let table = approx.tabulate(&engine.grid);
                let actions = engine.greedy_policy(scenario, Some(&table));
                PolicyRule::Table(Arc::new(PolicyTable { grid: engine.grid, actions }))
            }
            GreedyMode::MonteCarlo { samples } => {
                PolicyRule::MonteCarlo(Arc::new(MonteCarloGreedy::new(scenario, approx.clone(), samples)))
            }
        }
    };
    Ok(PolicyHandle { kind, rule, approx: Some(approx) })
}

/// Least-squares solution of minimum norm in column-scaled coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct LsFit {
    pub coefficients: Vec<f64>,
    pub rank: usize,
}

impl LsFit {
    pub fn rank_deficient(&self, k: usize) -> bool {
        self.rank < k
    }
}

/// Solves the normal equations of the unit-norm-column design through a
/// symmetric eigendecomposition, dropping directions whose eigenvalue is at
/// rounding level. The dense SVD is avoided because it can lose accuracy on
/// exactly rank-deficient designs.
pub fn fit_least_squares(design: &[Vec<f64>], target: &[f64]) -> LsFit {
    let rows = design.len();
    let k = design.first().map_or(0, |r| r.len());
    let a = DMatrix::from_fn(rows, k, |i, j| design[i][j]);
    let b = DVector::from_column_slice(target);
    let scale = DVector::from_fn(k, |j, _| {
        let n = a.column(j).norm();
        if n > 0.0 {
            1.0 / n
        } else {
            0.0
        }
    });
    let s = &a * DMatrix::from_diagonal(&scale);
    let eig = (s.transpose() * &s).symmetric_eigen();
    let lmax = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let tol = lmax * rows.max(k) as f64 * f64::EPSILON * 100.0;
    let proj = eig.eigenvectors.transpose() * (s.transpose() * &b);
    let mut w = DVector::zeros(k);
    let mut rank = 0;
    for i in 0..k {
        if eig.eigenvalues[i] > tol {
            w[i] = proj[i] / eig.eigenvalues[i];
            rank += 1;
        }
    }
    let x = (&eig.eigenvectors * w).component_mul(&scale);
    LsFit { coefficients: x.iter().cloned().collect(), rank }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdpSettings {
    pub choice: u8,
    /// Training trajectories per iteration (Q).
    pub replications: usize,
    /// Periods per trajectory (H).
    pub horizon: usize,
    /// Policy-improvement steps (N); `N + 1` policies are scored.
    pub iterations: usize,
    /// Trajectories of the start-state cost estimate used to pick the best iterate.
    pub estimate_replications: usize,
    /// Monte-Carlo samples per greedy decision when exact expectation is unavailable.
    pub mc_samples: usize,
    /// Forces the greedy mode; `None` picks exact when the engine fits.
    pub mode: Option<GreedyMode>,
    /// Extra periods simulated after the `H` recorded visits so that every
    /// regression target sums at least this many periods; `None` means `H`.
    pub lookahead: Option<usize>,
}

impl AdpSettings {
    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 || self.horizon == 0 || self.iterations == 0 || self.estimate_replications < 2 {
            return Err(Error::InvalidParameter(format!("ADP needs Q >= 1, H >= 1, N >= 1 and >= 2 estimate runs: {self:?}")));
        }
        BasisSpec::new(self.choice, 2).map(|_| ())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub cost: Estimate,
    pub beta_checksum: f64,
    /// Regression rows used to produce the next iterate (0 for the last one).
    pub rows: usize,
    pub rank_deficient: bool,
}

#[derive(Debug, Clone)]
pub struct AdpRun {
    pub best: Arc<ValueApprox>,
    pub best_iteration: usize,
    pub policy: PolicyHandle,
    pub mode: GreedyMode,
    pub log: Vec<IterationRecord>,
    /// Every scored iterate `β^0..β^N`.
    pub iterates: Vec<Arc<ValueApprox>>,
}

const TAG_ESTIMATE: u64 = 0xE57;
const TAG_TRAIN: u64 = 0x7EA1;

/// Chooses exact greedy when the exact engine fits within its default limits.
pub fn auto_mode(scenario: &Scenario, mc_samples: usize) -> (GreedyMode, Option<Engine>) {
    if scenario.m() <= 3 {
        if let Ok(e) = Engine::new(scenario, EngineLimits::default()) {
            return (GreedyMode::Exact, Some(e));
        }
    }
    (GreedyMode::MonteCarlo { samples: mc_samples }, None)
}

/// Sample-average discounted cost from `(0, 0)` under common streams.
pub fn start_estimate(scenario: &Scenario, policy: &PolicyHandle, replications: usize, horizon: usize, seed: u64) -> Estimate {
    let sim = Simulator::new(scenario);
    let path_seed = rng::derive(seed, TAG_ESTIMATE);
    let decision_seed = rng::derive(path_seed, 1);
    let alpha = scenario.costs.discount;
    let costs: Vec<f64> = (0..replications as u64)
        .into_par_iter()
        .map(|r| {
            let mut acc = 0.0;
            let mut disc = 1.0;
            sim.run(policy, scenario.start_state(), horizon, path_seed, r, decision_seed, None, |p| {
                acc += disc * p.outcome.cost.total();
                disc *= alpha;
            });
            acc
        })
        .collect();
    Estimate::from_samples(&costs)
}

/// `(1 - 1/(n+1)) prev + star/(n+1)`: after `N` steps from any start the
/// coefficients equal the mean of the `N` fitted vectors.
pub fn smooth(prev: &[f64], star: &[f64], n: usize) -> Vec<f64> {
    let weight = 1.0 / (n + 1) as f64;
    prev.iter().zip(star).map(|(b, s)| (1.0 - weight) * b + weight * s).collect()
}

pub fn run_approximate_policy_iteration(
    scenario: &Scenario,
    v1: Arc<NonperishableValue>,
    settings: &AdpSettings,
    seed: u64,
    engine: Option<&Engine>,
    kind: PolicyKind,
) -> Result<AdpRun> {
    settings.validate()?;
    let basis = BasisSpec::new(settings.choice, scenario.m())?;
    let (mode, owned) = match settings.mode {
        Some(mode) => (mode, None),
        None if engine.is_some() => (GreedyMode::Exact, None),
        None => auto_mode(scenario, settings.mc_samples),
    };
    let engine = engine.or(owned.as_ref());
    let period = scenario.period();
    let lookahead = settings.lookahead.unwrap_or(settings.horizon);
    let alpha = scenario.costs.discount;
    let cap = scenario.inventory_cap as u32;
    let sim = Simulator::new(scenario);

    let mut beta = Arc::new(ValueApprox::zero(basis, period, v1));
    let mut log = Vec::with_capacity(settings.iterations + 1);
    let mut iterates = Vec::with_capacity(settings.iterations + 1);
    let mut policies = Vec::with_capacity(settings.iterations + 1);
    for n in 0..=settings.iterations {
        let policy = greedy_policy(scenario, beta.clone(), mode, engine, kind)?;
        let cost = start_estimate(scenario, &policy, settings.estimate_replications, settings.horizon, seed);
        let mut record = IterationRecord { iteration: n, cost, beta_checksum: beta.checksum(), rows: 0, rank_deficient: false };
        iterates.push(beta.clone());
        if n == settings.iterations {
            log.push(record);
            policies.push(policy);
            break;
        }

        // Simulate training trajectories from random states and collect tail costs.
        let path_seed = rng::derive(seed, TAG_TRAIN ^ ((n as u64) << 20));
        let decision_seed = rng::derive(path_seed, 1);
        let per_rep: Vec<Vec<(usize, Vec<f64>, f64)>> = (0..settings.replications as u64)
            .into_par_iter()
            .map(|r| {
                let mut init = rng::stream(seed, Purpose::Start, n as u64, r);
                let tau = init.random_range(0..period);
                let x: Vec<u32> = (0..scenario.m() - 1).map(|_| init.random_range(0..=cap)).collect();
                let mut visits = Vec::with_capacity(settings.horizon + lookahead);
                let mut costs = Vec::with_capacity(settings.horizon + lookahead);
                sim.run(&policy, InventoryState::new(tau, x), settings.horizon + lookahead, path_seed, r, decision_seed, None, |p| {
                    visits.push((p.state.tau, p.state.x.clone()));
                    costs.push(p.outcome.cost.total());
                });
                let c = discounted_tail_sums(&costs, alpha);
                visits.into_iter().zip(c).take(settings.horizon).map(|((tau, x), c)| (tau, beta.features(tau, &x), c)).collect()
            })
            .collect();

        let mut design: Vec<Vec<Vec<f64>>> = vec![Vec::new(); period];
        let mut target: Vec<Vec<f64>> = vec![Vec::new(); period];
        for (tau, phi, c) in per_rep.into_iter().flatten() {
            design[tau].push(phi);
            target[tau].push(c);
        }
        let k = basis.len();
        let mut next = Vec::with_capacity(period);
        for tau in 0..period {
            record.rows += design[tau].len();
            let prev = &beta.coefficients[tau];
            let star = if design[tau].is_empty() {
                record.rank_deficient = true;
                prev.clone()
            } else {
                let fit = fit_least_squares(&design[tau], &target[tau]);
                record.rank_deficient |= fit.rank_deficient(k);
                fit.coefficients
            };
            next.push(smooth(prev, &star, n));
        }
        log.push(record);
        policies.push(policy);
        beta = Arc::new(beta.with_coefficients(next));
    }

    let best_iteration =
        (0..log.len()).min_by(|&a, &b| log[a].cost.mean.total_cmp(&log[b].cost.mean).then(a.cmp(&b))).expect("at least one iterate");
    Ok(AdpRun { best: iterates[best_iteration].clone(), best_iteration, policy: policies.swap_remove(best_iteration), mode, log, iterates })
}
