//! One pipeline per subcommand.

use std::io::BufWriter;
use std::path::Path;

use perish::adp::{greedy_policy, AdpRun};
use perish::baselines::{deterministic_shelf_life_policy, exogenous_refit_or_base, myopic_policy};
use perish::bounds::lower_bound;
use perish::config::ScenarioConfig;
use perish::error::Result;
use perish::evaluation::{optimality_gap, ReferenceKind};
use perish::exact_dp::{
    expected_cost_nonconvexity, find_sensitivity_violations, value_nonconvexity, write_table_csv, SliceAxis, SolveOptions,
};
use perish::experiment::{demand_trace, evaluate_from_start, evaluate_on_trace, impact_row, impact_row_simulated, train_adp, ExactCase};
use perish::mdp::{InventoryState, Scenario};
use perish::policy::{PolicyHandle, PolicyKind};
use perish::rng;
use perish::stats::Estimate;
use serde::Serialize;

use crate::output::{write_csv, PlotPoint, ResultRow};
use crate::Command;

pub fn dispatch(command: Command, cfg: &ScenarioConfig, out: &Path) -> Result<()> {
    let scenario = cfg.scenario()?;
    match command {
        Command::Exact => exact(cfg, scenario, out),
        Command::Adp => adp(cfg, scenario, out),
        Command::Myopic => myopic(cfg, scenario, out),
        Command::Bound => bound(cfg, scenario, out),
        Command::Impact => impact(cfg, scenario, out),
        Command::Evaluate => evaluate(cfg, scenario, out),
        Command::Presets | Command::Rerun { .. } => unreachable!("handled before dispatch"),
    }
}

/// Solves exactly when the instance is small enough for the exact solver.
fn exact_case(cfg: &ScenarioConfig, scenario: &Scenario) -> Result<Option<ExactCase>> {
    if scenario.m() > 3 && !cfg.solver.allow_large {
        return Ok(None);
    }
    ExactCase::solve(scenario.clone(), cfg.solve_options()).map(Some)
}

#[derive(Serialize)]
struct ResidualRow {
    sweep: usize,
    residual: f64,
}

#[derive(Serialize)]
struct SensitivityRow {
    tau: usize,
    state: String,
    clause: String,
    deltas: String,
    boundary: bool,
}

#[derive(Serialize)]
struct ConvexityRow {
    tau: usize,
    state: String,
    axis: String,
    at: usize,
    second_difference: f64,
}

/// `x_{m-1} … x_1` joined by spaces (freshest first).
fn state_label(s: &InventoryState) -> String {
    s.x.iter().rev().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

fn exact(cfg: &ScenarioConfig, scenario: Scenario, out: &Path) -> Result<()> {
    let case = ExactCase::solve(scenario, cfg.solve_options())?;
    let sc = &case.scenario;
    let mut w = BufWriter::new(std::fs::File::create(out.join("values.csv"))?);
    write_table_csv(&mut w, &case.values, &case.policy)?;
    drop(w);
    let residuals: Vec<ResidualRow> =
        case.values.residuals.iter().enumerate().map(|(i, &r)| ResidualRow { sweep: i + 1, residual: r }).collect();
    write_csv(out, "run_log.csv", &residuals)?;

    let sensitivity: Vec<SensitivityRow> = find_sensitivity_violations(&case.policy)
        .into_iter()
        .map(|w| SensitivityRow {
            tau: w.state.tau,
            state: state_label(&w.state),
            clause: format!("{:?}", w.clause),
            deltas: w.deltas.iter().rev().map(|d| d.to_string()).collect::<Vec<_>>().join(" "),
            boundary: w.boundary,
        })
        .collect();
    write_csv(out, "sensitivity_witnesses.csv", &sensitivity)?;

    let convexity: Vec<ConvexityRow> = value_nonconvexity(&case.values)
        .into_iter()
        .chain(expected_cost_nonconvexity(&case.engine, sc, &case.values))
        .map(|w| ConvexityRow {
            tau: w.state.tau,
            state: state_label(&w.state),
            axis: match w.axis {
                SliceAxis::Inventory(i) => format!("x{i}"),
                SliceAxis::Order => "z".into(),
            },
            at: w.at,
            second_difference: w.second_difference,
        })
        .collect();
    write_csv(out, "nonconvexity_witnesses.csv", &convexity)?;

    // Slices through weekday 0 with eight units of the oldest age.
    let m = sc.m();
    let cap = sc.inventory_cap as u32;
    let anchor = 8.min(cap);
    let mut plot = Vec::new();
    for k in 0..=cap {
        let mut x = vec![0u32; m - 1];
        x[0] = anchor;
        x[m - 2] = if m > 2 { k } else { anchor };
        let s = InventoryState::new(0, x);
        plot.push(PlotPoint::exact("value", k as f64, case.values.value(&s)));
        plot.push(PlotPoint::exact("policy", k as f64, case.policy.action(&s) as f64));
    }
    let mut x = vec![0u32; m - 1];
    x[0] = anchor;
    let xi = case.engine.grid.index_x(&x);
    for (z, q) in case.engine.q_row(sc, &case.values.values, 0, xi).into_iter().enumerate() {
        plot.push(PlotPoint::exact("expected-cost", z as f64, q));
    }
    write_csv(out, "plot_slices.csv", &plot)?;

    let opt = case.optimum();
    let my = myopic_policy(sc);
    let rows = vec![
        ResultRow::exact(&cfg.name, PolicyKind::ExactOptimal.label(), opt, Some(opt)),
        ResultRow::exact(&cfg.name, my.kind.label(), opt * (1.0 + case.gap_of(&my)? / 100.0), Some(opt)),
    ];
    write_csv(out, "results.csv", &rows)?;
    println!(
        "{}: V(0,0) = {opt:.4}, {} sweeps, {} sensitivity and {} convexity witnesses",
        cfg.name,
        case.values.residuals.len(),
        sensitivity.len(),
        convexity.len()
    );
    Ok(())
}

#[derive(Serialize)]
struct IterationRow {
    iteration: usize,
    cost: f64,
    ci_lo: f64,
    ci_hi: f64,
    beta_checksum: f64,
    rows: usize,
    rank_deficient: bool,
}

fn write_adp_log(out: &Path, run: &AdpRun) -> Result<()> {
    let rows: Vec<IterationRow> = run
        .log
        .iter()
        .map(|r| IterationRow {
            iteration: r.iteration,
            cost: r.cost.mean,
            ci_lo: r.cost.lo(),
            ci_hi: r.cost.hi(),
            beta_checksum: r.beta_checksum,
            rows: r.rows,
            rank_deficient: r.rank_deficient,
        })
        .collect();
    write_csv(out, "run_log.csv", &rows)?;
    let plot: Vec<PlotPoint> = run
        .log
        .iter()
        .map(|r| PlotPoint { series: "adp-cost".into(), x: r.iteration as f64, y: r.cost.mean, ci_lo: r.cost.lo(), ci_hi: r.cost.hi() })
        .collect();
    write_csv(out, "plot_iterations.csv", &plot)?;
    std::fs::write(out.join("approx.json"), serde_json::to_string_pretty(&run.best.to_file())?)?;
    Ok(())
}

fn adp(cfg: &ScenarioConfig, scenario: Scenario, out: &Path) -> Result<()> {
    let case = exact_case(cfg, &scenario)?;
    let run = train_adp(cfg, &scenario, case.as_ref().map(|c| &c.engine), PolicyKind::EndogenousAdp)?;
    write_adp_log(out, &run)?;
    let my = myopic_policy(&scenario);
    let mut rows = Vec::new();
    let adp_eval = evaluate_from_start(cfg, &scenario, &run.policy)?;
    let my_eval = evaluate_from_start(cfg, &scenario, &my)?;
    match &case {
        Some(case) => {
            let opt = case.optimum();
            rows.push(ResultRow::exact(&cfg.name, PolicyKind::ExactOptimal.label(), opt, Some(opt)));
            for p in [&run.policy, &my] {
                let gap = case.gap_of(p)?;
                rows.push(ResultRow::exact(&cfg.name, p.kind.label(), opt * (1.0 + gap / 100.0), Some(opt)));
            }
        }
        None => {}
    }
    rows.push(ResultRow::simulated(&cfg.name, run.policy.kind.label(), "simulated", &adp_eval));
    rows.push(ResultRow::simulated(&cfg.name, my.kind.label(), "simulated", &my_eval));
    write_csv(out, "results.csv", &rows)?;
    println!(
        "{}: best iterate {} of {}, simulated cost {:.3} ± {:.3} (myopic {:.3} ± {:.3})",
        cfg.name,
        run.best_iteration,
        run.log.len() - 1,
        adp_eval.cost.mean,
        adp_eval.cost.half_width,
        my_eval.cost.mean,
        my_eval.cost.half_width
    );
    Ok(())
}

fn myopic(cfg: &ScenarioConfig, scenario: Scenario, out: &Path) -> Result<()> {
    let my = myopic_policy(&scenario);
    let report = evaluate_from_start(cfg, &scenario, &my)?;
    let mut rows = vec![ResultRow::simulated(&cfg.name, my.kind.label(), "simulated", &report)];
    if let Some(case) = exact_case(cfg, &scenario)? {
        let opt = case.optimum();
        let gap = optimality_gap(report.cost, Estimate::exact(opt), ReferenceKind::Exact)?;
        rows[0] = rows[0].clone().with_gap(opt, gap);
        rows.push(ResultRow::exact(&cfg.name, my.kind.label(), opt * (1.0 + case.gap_of(&my)? / 100.0), Some(opt)));
    }
    write_csv(out, "results.csv", &rows)?;
    std::fs::write(out.join("evaluation.json"), serde_json::to_string_pretty(&report)?)?;
    println!("{}: myopic cost {:.3} ± {:.3}", cfg.name, report.cost.mean, report.cost.half_width);
    Ok(())
}

fn bound(cfg: &ScenarioConfig, scenario: Scenario, out: &Path) -> Result<()> {
    let limits = SolveOptions::large().limits;
    let lb = lower_bound(&scenario, &scenario.start_state(), cfg.bound.replications, cfg.seed, limits)?;
    let mut row = ResultRow::estimate(&cfg.name, "lower-bound", "relaxation", lb.estimate);
    if let Some(case) = exact_case(cfg, &scenario)? {
        let opt = case.optimum();
        row.reference = Some(opt);
        row.gap_percent = Some(100.0 * (lb.estimate.mean / opt - 1.0));
        row.gap_half_width = Some(100.0 * lb.estimate.half_width / opt);
    }
    write_csv(out, "results.csv", &[row])?;
    println!(
        "{}: lower bound {:.3} ± {:.3} over {} horizons (mean length {:.1})",
        cfg.name, lb.estimate.mean, lb.estimate.half_width, lb.estimate.n, lb.mean_horizon
    );
    Ok(())
}

#[derive(Serialize)]
struct ImpactCsvRow {
    schema: u32,
    scenario: String,
    method: String,
    reference: f64,
    deterministic_gap: f64,
    exogenous_gap: f64,
    exogenous_myopic_data_gap: Option<f64>,
    refit_probabilities: String,
    refit_smoothed: bool,
    refit_fallback: bool,
}

fn probs(p: &[f64]) -> String {
    p.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>().join(" ")
}

fn impact(cfg: &ScenarioConfig, scenario: Scenario, out: &Path) -> Result<()> {
    let row = match exact_case(cfg, &scenario)? {
        Some(case) => {
            let r = impact_row(cfg, &case)?;
            ImpactCsvRow {
                schema: crate::output::SCHEMA_VERSION,
                scenario: r.scenario,
                method: "exact".into(),
                reference: r.optimal,
                deterministic_gap: r.deterministic_gap,
                exogenous_gap: r.refit_optimal_gap,
                exogenous_myopic_data_gap: Some(r.refit_myopic_gap),
                refit_probabilities: probs(&r.refit_optimal.probabilities()),
                refit_smoothed: r.refit_optimal.smoothed,
                refit_fallback: r.refit_optimal_fallback,
            }
        }
        None => {
            let r = impact_row_simulated(cfg, &scenario)?;
            ImpactCsvRow {
                schema: crate::output::SCHEMA_VERSION,
                scenario: r.scenario,
                method: "simulated-vs-adp".into(),
                reference: r.endogenous.mean,
                deterministic_gap: r.deterministic_gap.mean,
                exogenous_gap: r.exogenous_gap.mean,
                exogenous_myopic_data_gap: None,
                refit_probabilities: probs(&r.refit.probabilities()),
                refit_smoothed: r.refit.smoothed,
                refit_fallback: r.refit_fallback,
            }
        }
    };
    println!("{}: deterministic-shelf-life gap {:.2}%, exogenous gap {:.2}%", row.scenario, row.deterministic_gap, row.exogenous_gap);
    write_csv(out, "impact.csv", &[row])?;
    Ok(())
}

fn evaluate(cfg: &ScenarioConfig, scenario: Scenario, out: &Path) -> Result<()> {
    let trace = demand_trace(cfg, &scenario)?;
    std::fs::write(out.join("trace.csv"), trace.to_csv())?;
    let large = SolveOptions { allow_large: true, limits: SolveOptions::large().limits, ..cfg.solve_options() };
    let my = myopic_policy(&scenario);
    let det = deterministic_shelf_life_policy(&scenario, &large)?;
    let endog = train_adp(cfg, &scenario, None, PolicyKind::EndogenousAdp)?;
    write_adp_log(out, &endog)?;
    let (refit, _) = exogenous_refit_or_base(&scenario, &my, cfg.evaluation.refit_periods, rng::derive(cfg.seed, 0x0F2))?;
    let exog_run = train_adp(cfg, &scenario.with_shelf_life(refit.model.clone()), None, PolicyKind::ExogenousAdp)?;
    let exog: PolicyHandle = greedy_policy(&scenario, exog_run.best.clone(), exog_run.mode, None, PolicyKind::ExogenousAdp)?;
    let policies = [&endog.policy, &exog, &det, &my];
    let results = evaluate_on_trace(&policies, &scenario, &trace, cfg.evaluation.trace_replications, cfg.seed)?;
    let rows: Vec<ResultRow> = results.iter().map(|r| ResultRow::simulated(&cfg.name, &r.policy, "trace", &r.report)).collect();
    write_csv(out, "results.csv", &rows)?;
    std::fs::write(out.join("evaluation.json"), serde_json::to_string_pretty(&results)?)?;
    for r in &results {
        println!(
            "{:<26} shortage {:6.2}% expiry {:6.2}% orders/day {:.3} holding {:.2}",
            r.policy,
            r.report.shortage_rate.mean,
            r.report.expiry_rate.mean,
            r.report.order_frequency.mean / 100.0,
            r.report.avg_holding.mean
        );
    }
    Ok(())
}
