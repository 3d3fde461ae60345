//! Property checks shared by the integration tests and the acceptance run.
#![allow(dead_code)]

use std::sync::Arc;

use perish::adp::{fit_least_squares, smooth, BasisSpec, ValueApprox};
use perish::bounds::{lower_bound, sample_horizon, Relaxation, RevealedScenario};
use perish::config::Scale;
use perish::demand::PeriodicDemandModel;
use perish::engine::{Engine, EngineLimits};
use perish::evaluation::{evaluate_policy, simulate_many, DemandTrace};
use perish::exact_dp::{nonperishable_value, value_iteration, PolicyTable, SolveOptions};
use perish::experiment::train_adp;
use perish::mdp::{advance, CostParams, InventoryState, Scenario, StateGrid};
use perish::policy::{MonteCarloGreedy, PolicyHandle, PolicyKind};
use perish::presets;
use perish::rng::{self, Purpose};
use perish::shelflife::ShelfLifeModel;
use perish::stats::Estimate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Check = Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

pub fn costs(fixed: f64, wastage: f64) -> CostParams {
    CostParams { fixed, holding: 1.0, shortage: 20.0, wastage, discount: 0.95 }
}

pub fn m3(slopes: (f64, f64), fixed: f64, wastage: f64, big_m: usize) -> Scenario {
    let sl = ShelfLifeModel::logit(vec![1.0, 0.5], vec![slopes.0, slopes.1]).unwrap();
    Scenario::new(PeriodicDemandModel::weekday(big_m), sl, costs(fixed, wastage)).unwrap()
}

pub fn constant_policy(sc: &Scenario, z: u16) -> PolicyHandle {
    let grid = StateGrid::new(sc);
    PolicyHandle::table(PolicyKind::LookupTable, PolicyTable { grid, actions: vec![z; grid.len()] })
}

/// Demand rows, shelf-life categoricals and delivery compositions each sum to one.
pub fn pmfs_normalize() -> Check {
    for big_m in [10, 20, 30, 60] {
        let d = PeriodicDemandModel::weekday(big_m);
        for tau in 0..7 {
            let s: f64 = d.row(tau).iter().sum();
            ensure!((s - 1.0).abs() < 1e-12, "demand row M={big_m} tau={tau} sums to {s}");
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for m in [2usize, 3, 5, 8] {
        for _ in 0..50 {
            let c0: Vec<f64> = (1..m).map(|_| rng.random_range(-3.0..3.0)).collect();
            let c1: Vec<f64> = (1..m).map(|_| rng.random_range(-1.0..1.0)).collect();
            let model = ShelfLifeModel::logit(c0, c1).unwrap();
            for z in [0usize, 1, 7, 20, 100, 1000] {
                let s: f64 = model.probabilities(z).iter().sum();
                ensure!((s - 1.0).abs() < 1e-12, "shelf-life m={m} z={z} sums to {s}");
            }
            if m <= 5 {
                for z in [0usize, 1, 4, 9] {
                    let s: f64 = model.support(z).iter().map(|(_, p)| p).sum();
                    ensure!((s - 1.0).abs() < 1e-12, "compositions m={m} z={z} sum to {s}");
                }
            }
        }
    }
    Ok(())
}

/// Serves units one at a time, oldest first, then ages what is left.
fn unit_oracle(x: &[u32], y: &[u32], d: u32, cap: u32) -> (Vec<u32>, u32, u32, u32, u32) {
    let m = y.len();
    let mut lives: Vec<usize> = Vec::new();
    for (i, &n) in x.iter().enumerate() {
        lives.extend(std::iter::repeat_n(i + 1, n as usize));
    }
    for (k, &n) in y.iter().enumerate() {
        lives.extend(std::iter::repeat_n(k + 1, n as usize));
    }
    lives.sort_unstable();
    let served = (d as usize).min(lives.len());
    let left = &lives[served..];
    let expired = left.iter().filter(|&&l| l == 1).count() as u32;
    let mut next = vec![0u32; m - 1];
    for &l in left.iter().filter(|&&l| l > 1) {
        next[l - 2] += 1;
    }
    let mut clamped = 0;
    for v in &mut next {
        if *v > cap {
            clamped += *v - cap;
            *v = cap;
        }
    }
    (next, served as u32, d - served as u32, expired, clamped)
}

pub fn oufo_matches_unit_oracle(tuples: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for i in 0..tuples {
        let m = rng.random_range(2..=8usize);
        let cap = rng.random_range(1..=25u32);
        let x: Vec<u32> = (0..m - 1).map(|_| rng.random_range(0..=cap)).collect();
        let y: Vec<u32> = (0..m).map(|_| rng.random_range(0..=12)).collect();
        let d = rng.random_range(0..=60);
        let mut next = vec![0u32; m - 1];
        let f = advance(&x, &y, d, cap, &mut next);
        let (want, served, unmet, expired, clamped) = unit_oracle(&x, &y, d, cap);
        ensure!(
            next == want && f.transfused == served && f.unmet == unmet && f.expired == expired && f.clamped == clamped,
            "tuple {i}: x={x:?} y={y:?} d={d} cap={cap}: got {next:?} {f:?}, oracle {want:?} ({served}, {unmet}, {expired}, {clamped})"
        );
    }
    Ok(())
}

/// `initial + delivered = transfused + expired + clamped + carried` on every trajectory.
pub fn conservation_holds() -> Check {
    for (i, (slopes, z)) in [((0.4, 0.8), 3u16), ((-0.4, -0.8), 9), ((0.0, 0.0), 20), ((-0.1, -0.05), 0)].into_iter().enumerate() {
        let sc = m3(slopes, 10.0, 5.0, 20);
        let start = InventoryState::new(2, vec![4, 7]);
        let runs = simulate_many(&constant_policy(&sc, z), &sc, &start, 150, 40, i as u64, None).map_err(|e| e.to_string())?;
        for (r, run) in runs.iter().enumerate() {
            let t = run.totals;
            ensure!(t.balanced(), "case {i} run {r}: {t:?}");
            ensure!(t.transfused + t.unmet == t.demand, "case {i} run {r}: demand split {t:?}");
        }
    }
    Ok(())
}

/// `‖T v − T w‖∞ ≤ α ‖v − w‖∞` on random value pairs.
pub fn bellman_contracts() -> Check {
    let sc = m3((-0.2, -0.1), 10.0, 20.0, 12);
    let engine = Engine::new(&sc, EngineLimits::default()).map_err(|e| e.to_string())?;
    let n = engine.grid.len();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let alpha = sc.costs.discount;
    for trial in 0..10 {
        let scale = [1.0, 50.0, 500.0][trial % 3];
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..scale)).collect();
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..scale)).collect();
        let (tv, _) = engine.bellman(&sc, &v);
        let (tw, _) = engine.bellman(&sc, &w);
        let sup = |a: &[f64], b: &[f64]| a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        let ratio = sup(&tv, &tw) / sup(&v, &w);
        ensure!(ratio <= alpha + 1e-6, "trial {trial}: contraction ratio {ratio}");
    }
    Ok(())
}

/// The smoothing recursion yields the plain mean of the fitted vectors.
pub fn smoothing_is_running_average() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for trial in 0..200 {
        let k = rng.random_range(1..12);
        let steps = rng.random_range(1..40);
        let start: Vec<f64> = (0..k).map(|_| rng.random_range(-1e3..1e3)).collect();
        let stars: Vec<Vec<f64>> = (0..steps).map(|_| (0..k).map(|_| rng.random_range(-1e3..1e3)).collect()).collect();
        let mut beta = start;
        for (n, s) in stars.iter().enumerate() {
            beta = smooth(&beta, s, n);
        }
        for j in 0..k {
            let mean = stars.iter().map(|s| s[j]).sum::<f64>() / steps as f64;
            ensure!((beta[j] - mean).abs() <= 1e-9 * mean.abs().max(1.0), "trial {trial}: {} vs {mean}", beta[j]);
        }
    }
    Ok(())
}

/// Residuals of the fit are orthogonal to every column, including collinear ones.
pub fn least_squares_orthogonal() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for trial in 0..100 {
        let rows = rng.random_range(5..400);
        let k = rng.random_range(1..9usize);
        let collinear = trial % 3 == 0 && k > 1;
        let design: Vec<Vec<f64>> = (0..rows)
            .map(|_| {
                let mut r: Vec<f64> = (0..k).map(|_| rng.random_range(-50.0..50.0)).collect();
                r[0] = 1.0;
                if collinear {
                    r[k - 1] = 3.0 * r[0] - 0.5 * r[k / 2];
                }
                r
            })
            .collect();
        let target: Vec<f64> = (0..rows).map(|_| rng.random_range(0.0..1e4)).collect();
        let fit = fit_least_squares(&design, &target);
        let resid: Vec<f64> =
            design.iter().zip(&target).map(|(r, t)| t - r.iter().zip(&fit.coefficients).map(|(a, b)| a * b).sum::<f64>()).collect();
        let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
        let b_norm = norm(&mut target.iter().copied());
        for j in 0..k {
            let col = norm(&mut design.iter().map(|r| r[j]));
            let dot: f64 = design.iter().zip(&resid).map(|(r, e)| r[j] * e).sum();
            ensure!(dot.abs() <= 1e-6 * col * b_norm, "trial {trial} column {j}: {dot} vs {}", col * b_norm);
        }
    }
    Ok(())
}

/// Undiscounted cost over a Geometric horizon equals the discounted value of a 2-state chain.
pub fn geometric_horizon_matches_discounting() -> Check {
    let alpha: f64 = 0.9;
    let (p, c) = (0.25f64, [2.0f64, 5.0]);
    let a = 1.0 - alpha * (1.0 - p);
    let v0 = (a * c[0] + alpha * p * c[1]) / (a * a - (alpha * p).powi(2));
    let mut rng = rng::stream(17, Purpose::Relaxation, 9, 0);
    let xs: Vec<f64> = (0..100_000)
        .map(|_| {
            let t = sample_horizon(alpha, rng.random::<f64>());
            let (mut s, mut total) = (0usize, 0.0);
            for _ in 0..=t {
                total += c[s];
                if rng.random::<f64>() < p {
                    s = 1 - s;
                }
            }
            total
        })
        .collect();
    let e = Estimate::from_samples(&xs);
    ensure!((e.mean - v0).abs() < 3.0 * e.std_err, "{} ± {} vs {v0}", e.mean, e.std_err);
    Ok(())
}

/// Two different policies on the same seed see bit-identical demand streams.
pub fn crn_pairing() -> Check {
    let sc = m3((0.2, 0.4), 10.0, 5.0, 20);
    let a = simulate_many(&constant_policy(&sc, 0), &sc, &sc.start_state(), 80, 16, 9, None).map_err(|e| e.to_string())?;
    let b = simulate_many(&PolicyHandle::myopic(&sc), &sc, &sc.start_state(), 80, 16, 9, None).map_err(|e| e.to_string())?;
    for (r, (x, y)) in a.iter().zip(&b).enumerate() {
        ensure!(x.demands == y.demands, "replication {r}: demand streams differ");
    }
    ensure!(a.iter().zip(&b).any(|(x, y)| x.totals != y.totals), "the two policies behaved identically");
    let other = simulate_many(&constant_policy(&sc, 0), &sc, &sc.start_state(), 80, 16, 10, None).map_err(|e| e.to_string())?;
    ensure!(a.iter().zip(&other).any(|(x, y)| x.demands != y.demands), "different seeds gave the same demand");
    Ok(())
}

fn with_workers<T: Send>(n: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap().install(f)
}

/// Solver, simulation, training, refit and bound outputs do not depend on the worker count.
pub fn worker_count_invariant() -> Check {
    let cfg = presets::preset("m3-base-s2-f10-th20").unwrap().with_scale(Scale::Smoke);
    let sc = cfg.scenario().map_err(|e| e.to_string())?;
    let run = |n| {
        with_workers(n, || {
            let (values, policy) = value_iteration(&sc, &SolveOptions::default()).unwrap();
            let eval = evaluate_policy(&PolicyHandle::myopic(&sc), &sc, &sc.start_state(), 60, 40, 3).unwrap();
            let adp = train_adp(&cfg, &sc, None, PolicyKind::EndogenousAdp).unwrap();
            let refit = perish::baselines::exogenous_refit(&sc, &PolicyHandle::myopic(&sc), 600, 4).unwrap();
            let lb = lower_bound(&sc, &sc.start_state(), 30, 5, EngineLimits::default()).unwrap();
            let bits: Vec<u64> = values.values.iter().map(|v| v.to_bits()).collect();
            (bits, policy.actions, eval, adp.log, adp.best.checksum().to_bits(), refit, lb)
        })
    };
    let one = run(1);
    let eight = run(8);
    ensure!(one.0 == eight.0 && one.1 == eight.1, "value iteration differs");
    ensure!(one.2 == eight.2, "policy evaluation differs");
    ensure!(one.3 == eight.3 && one.4 == eight.4, "ADP training differs");
    ensure!(one.5 == eight.5, "exogenous refit differs");
    ensure!(one.6 == eight.6, "lower bound differs");
    Ok(())
}

/// Monte-Carlo greedy values agree with the exact expectation for a nonzero approximation.
pub fn monte_carlo_greedy_agrees_with_exact() -> Check {
    let sc = m3((-0.2, -0.1), 10.0, 20.0, 12);
    let v1 = Arc::new(nonperishable_value(&sc, &SolveOptions::default()).map_err(|e| e.to_string())?);
    let basis = BasisSpec::new(2, 3).map_err(|e| e.to_string())?;
    let zero = ValueApprox::zero(basis, 7, v1);
    let coefs: Vec<Vec<f64>> = (0..7).map(|t| (0..basis.len()).map(|j| 0.3 + 0.1 * ((t + j) % 4) as f64).collect()).collect();
    let approx = Arc::new(zero.with_coefficients(coefs));
    let engine = Engine::new(&sc, EngineLimits::default()).map_err(|e| e.to_string())?;
    let table = approx.tabulate(&engine.grid);
    let samples = 20_000;
    let mc = MonteCarloGreedy::new(&sc, approx.clone(), samples);
    let mut u = vec![0.0; samples * (sc.max_order() + 1)];
    rng::fill_uniform(&mut ChaCha8Rng::seed_from_u64(6), &mut u);
    for state in [InventoryState::new(0, vec![0, 0]), InventoryState::new(3, vec![5, 2]), InventoryState::new(6, vec![1, 9])] {
        let exact = engine.q_row(&sc, &table, state.tau, engine.grid.index_x(&state.x));
        let sampled = mc.q_values(&state, &u);
        let best = exact.iter().cloned().fold(f64::INFINITY, f64::min);
        for (z, (e, s)) in exact.iter().zip(&sampled).enumerate() {
            ensure!((e - s).abs() <= 0.02 * e.abs().max(1.0), "state {state:?} z={z}: exact {e} sampled {s}");
        }
        let pick = perish::engine::argmin(sampled.iter().copied());
        ensure!(exact[pick] - best <= 0.01 * best, "state {state:?}: sampled choice {pick} costs {} vs {best}", exact[pick]);
    }
    Ok(())
}

/// On a revealed scenario no fixed policy beats the relaxed optimum.
pub fn relaxation_dominates_policies() -> Check {
    let sc = m3((-0.2, -0.1), 10.0, 5.0, 12);
    let relax = Relaxation::new(&sc, EngineLimits::default()).map_err(|e| e.to_string())?;
    let (_, optimal) = value_iteration(&sc, &SolveOptions::default()).map_err(|e| e.to_string())?;
    let myopic = PolicyHandle::myopic(&sc).materialize(optimal.grid).unwrap();
    let grid = optimal.grid;
    let constant = PolicyTable { grid, actions: vec![6; grid.len()] };
    for rep in 0..100 {
        let revealed = RevealedScenario::sample(&sc, 21, rep);
        let start = sc.start_state();
        let lb = relax.relaxed_value(&revealed, &start);
        for (name, p) in [("optimal", &optimal), ("myopic", &myopic), ("constant", &constant)] {
            let v = relax.policy_value(&revealed, &start, p);
            ensure!(lb <= v + 1e-9, "replication {rep}: relaxed {lb} above {name} policy {v}");
        }
    }
    Ok(())
}

/// With deterministic shelf-life the relaxed value averages to the exact optimum.
pub fn deterministic_relaxation_is_exact() -> Check {
    let sc = Scenario::new(PeriodicDemandModel::weekday(20), ShelfLifeModel::deterministic(3), costs(10.0, 5.0)).unwrap();
    let (v, _) = value_iteration(&sc, &SolveOptions::default()).map_err(|e| e.to_string())?;
    let opt = v.value(&sc.start_state());
    let lb = lower_bound(&sc, &sc.start_state(), 2000, 13, EngineLimits::default()).map_err(|e| e.to_string())?;
    let e = lb.estimate;
    ensure!((e.mean - opt).abs() <= 3.0 * e.std_err, "relaxed {} ± {} vs exact {opt}", e.mean, e.std_err);
    Ok(())
}

/// Shuffling a trace keeps its total but changes what a weekday-aware policy orders.
pub fn shuffled_trace_changes_orders() -> Check {
    use rand::seq::SliceRandom;
    let sc = m3((0.0, 0.0), 10.0, 5.0, 20);
    let trace = DemandTrace::synthetic(&sc, 0, 364, 8);
    let mut shuffled = trace.clone();
    shuffled.values.shuffle(&mut ChaCha8Rng::seed_from_u64(9));
    ensure!(trace.values.iter().sum::<i64>() == shuffled.values.iter().sum::<i64>(), "totals differ");
    let policy = PolicyHandle::myopic(&sc);
    let a = perish::evaluation::evaluate_on_demand_trace(&policy, &sc, &trace, 20, 1).map_err(|e| e.to_string())?;
    let b = perish::evaluation::evaluate_on_demand_trace(&policy, &sc, &shuffled, 20, 1).map_err(|e| e.to_string())?;
    ensure!(a.total_orders.mean != b.total_orders.mean, "order totals coincide: {}", a.total_orders.mean);
    Ok(())
}

/// Every property with its name, in reporting order.
pub fn property_suite() -> Vec<(&'static str, fn() -> Check)> {
    vec![
        ("pmf normalization", pmfs_normalize),
        ("OUFO vs unit oracle", || oufo_matches_unit_oracle(100_000)),
        ("unit conservation", conservation_holds),
        ("Bellman contraction", bellman_contracts),
        ("smoothing = running average", smoothing_is_running_average),
        ("least-squares orthogonality", least_squares_orthogonal),
        ("geometric horizon = discounting", geometric_horizon_matches_discounting),
        ("CRN pairing", crn_pairing),
        ("worker-count invariance", worker_count_invariant),
    ]
}
