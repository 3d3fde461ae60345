//! Named scenarios: the exact-DP illustration, the m = 3 benchmark grid, the
//! larger-m shelf-life rows, the grid for the impact of ignoring shelf-life
//! uncertainty, and the case-study cost grid.

use crate::config::{AdpConfig, BoundConfig, DemandConfig, EvaluationConfig, ScenarioConfig, SolverConfig};
use crate::mdp::CostParams;
use crate::shelflife::ShelfLifeModel;

pub const M3_INTERCEPTS: [f64; 2] = [1.0, 0.5];

/// Slope pairs `(c₁², c₁³)` of the m = 3 benchmark grid.
pub const M3_SLOPES: [(f64, f64); 6] = [(0.4, 0.8), (0.2, 0.4), (0.0, 0.0), (-0.1, -0.05), (-0.2, -0.1), (-0.4, -0.8)];

/// Slope pairs of the impact grid.
pub const IMPACT_SLOPES: [(f64, f64); 8] =
    [(0.4, 0.8), (0.2, 0.4), (-0.15, -0.05), (-0.2, -0.1), (-0.25, -0.15), (-0.3, -0.2), (-0.35, -0.25), (-0.4, -0.3)];

/// `(f, θ)` cells shared by the m = 3 grids (h = 1, l = 20).
pub const COST_CELLS: [(f64, f64); 6] = [(10.0, 5.0), (10.0, 20.0), (10.0, 80.0), (100.0, 5.0), (100.0, 20.0), (100.0, 80.0)];

/// `(f, θ)` cells of the case study.
pub const CASE_STUDY_CELLS: [(f64, f64); 6] = [(10.0, 2.0), (10.0, 5.0), (10.0, 20.0), (20.0, 2.0), (20.0, 5.0), (20.0, 20.0)];

pub const M5_ROWS: [(&str, [f64; 4], [f64; 4]); 5] = [
    ("exog", [1.6, 2.6, 2.8, 1.6], [0.0, 0.0, 0.0, 0.0]),
    ("endog", [1.9, 3.1, 3.1, 2.5], [-0.03, -0.06, -0.03, -0.09]),
    ("sens1", [1.9, 3.1, 3.1, 2.5], [-0.03, -0.06, -0.08, -0.09]),
    ("sens2", [1.9, 3.1, 3.1, 2.5], [-0.05, -0.1, -0.15, -0.2]),
    ("sens3", [1.9, 3.1, 3.1, 2.5], [-0.1, -0.2, -0.3, -0.4]),
];

const M8_INTERCEPTS: [f64; 7] = [0.8, 1.4, 1.9, 2.3, 1.7, 1.2, 0.8];

pub const M8_ROWS: [(&str, [f64; 7]); 5] = [
    ("exog", [0.0; 7]),
    ("endog", [-0.03, -0.04, -0.05, -0.06, -0.07, -0.08, -0.09]),
    ("sens1", [-0.06, -0.08, -0.1, -0.12, -0.14, -0.16, -0.18]),
    ("sens2", [-0.12, -0.16, -0.2, -0.24, -0.28, -0.32, -0.36]),
    ("sens3", [-0.24, -0.32, -0.4, -0.48, -0.56, -0.64, -0.72]),
];

fn costs(fixed: f64, wastage: f64) -> CostParams {
    CostParams { fixed, holding: 1.0, shortage: 20.0, wastage, discount: 0.95 }
}

fn config(name: String, description: String, shelf_life: ShelfLifeModel, costs: CostParams, truncation: usize) -> ScenarioConfig {
    ScenarioConfig {
        name,
        description,
        seed: 2024,
        costs,
        demand: DemandConfig::Weekday { truncation },
        shelf_life,
        inventory_cap: None,
        solver: SolverConfig::default(),
        adp: AdpConfig::default(),
        bound: BoundConfig::default(),
        evaluation: EvaluationConfig::default(),
    }
}

fn m3(slopes: (f64, f64)) -> ShelfLifeModel {
    ShelfLifeModel::logit(M3_INTERCEPTS.to_vec(), vec![slopes.0, slopes.1]).expect("finite coefficients")
}

fn tag(v: f64) -> String {
    format!("{v}")
}

pub fn figure1() -> Vec<ScenarioConfig> {
    vec![
        config("fig1-endog-f0".into(), "m=3 exact DP, endogenous shelf-life, no fixed cost".into(), m3((0.4, 0.8)), costs(0.0, 5.0), 20),
        config("fig1-endog-f10".into(), "m=3 exact DP, endogenous shelf-life, f=10".into(), m3((0.4, 0.8)), costs(10.0, 5.0), 20),
        config(
            "fig1-deter-f0".into(),
            "m=3 exact DP, every unit arrives fresh, no fixed cost".into(),
            ShelfLifeModel::deterministic(3),
            costs(0.0, 5.0),
            20,
        ),
    ]
}

pub fn m3_baseline_grid() -> Vec<ScenarioConfig> {
    let mut out = Vec::new();
    for (i, &s) in M3_SLOPES.iter().enumerate() {
        for &(f, th) in &COST_CELLS {
            out.push(config(
                format!("m3-base-s{}-f{}-th{}", i + 1, tag(f), tag(th)),
                format!("m=3 benchmark, slopes ({}, {}), f={f}, theta={th}", s.0, s.1),
                m3(s),
                costs(f, th),
                20,
            ));
        }
    }
    out
}

pub fn impact_grid() -> Vec<ScenarioConfig> {
    let mut out = Vec::new();
    for (i, &s) in IMPACT_SLOPES.iter().enumerate() {
        for &(f, th) in &COST_CELLS {
            out.push(config(
                format!("m3-impact-k{}-f{}-th{}", i + 1, tag(f), tag(th)),
                format!("m=3 impact of ignoring shelf-life uncertainty, slopes ({}, {}), f={f}, theta={th}", s.0, s.1),
                m3(s),
                costs(f, th),
                20,
            ));
        }
    }
    out
}

pub fn m5_rows() -> Vec<ScenarioConfig> {
    M5_ROWS
        .iter()
        .map(|(name, c0, c1)| {
            let sl = ShelfLifeModel::logit(c0.to_vec(), c1.to_vec()).expect("finite coefficients");
            config(format!("m5-{name}"), format!("m=5 shelf-life row `{name}`, f=10, theta=5"), sl, costs(10.0, 5.0), 20)
        })
        .collect()
}

pub fn m8_rows() -> Vec<ScenarioConfig> {
    M8_ROWS
        .iter()
        .map(|(name, c1)| {
            let sl = ShelfLifeModel::logit(M8_INTERCEPTS.to_vec(), c1.to_vec()).expect("finite coefficients");
            config(format!("m8-{name}"), format!("m=8 shelf-life row `{name}`, f=10, theta=5"), sl, costs(10.0, 5.0), 20)
        })
        .collect()
}

pub fn case_study_grid() -> Vec<ScenarioConfig> {
    let endog = &M5_ROWS[1];
    CASE_STUDY_CELLS
        .iter()
        .map(|&(f, th)| {
            let sl = ShelfLifeModel::logit(endog.1.to_vec(), endog.2.to_vec()).expect("finite coefficients");
            config(format!("case-f{}-th{}", tag(f), tag(th)), format!("m=5 case study, f={f}, theta={th}"), sl, costs(f, th), 20)
        })
        .collect()
}

pub fn demand_variants() -> Vec<ScenarioConfig> {
    let mut c = config(
        "m3-demand-x2".into(),
        "m=3 benchmark slopes (0.4, 0.8), f=10, theta=5, doubled demand truncated at 30".into(),
        m3(M3_SLOPES[0]),
        costs(10.0, 5.0),
        30,
    );
    c.demand = DemandConfig::WeekdayDoubled { truncation: 30 };
    vec![c]
}

pub fn catalog() -> Vec<ScenarioConfig> {
    let mut out = figure1();
    out.extend(m3_baseline_grid());
    out.extend(impact_grid());
    out.extend(m5_rows());
    out.extend(m8_rows());
    out.extend(case_study_grid());
    out.extend(demand_variants());
    out
}

pub fn preset(name: &str) -> Option<ScenarioConfig> {
    catalog().into_iter().find(|c| c.name == name)
}

pub fn names() -> Vec<String> {
    catalog().into_iter().map(|c| c.name).collect()
}
