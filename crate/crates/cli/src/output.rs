//! Output files: manifest, failure marker, and CSV tables.

use std::path::Path;

use perish::config::ScenarioConfig;
use perish::error::{Error, Result};
use perish::evaluation::{EvaluationReport, Gap};
use perish::stats::Estimate;
use serde::{Deserialize, Serialize};

use crate::Command;

/// Version of the CSV column sets written by this tool.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub schema: u32,
    pub command: Command,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    /// Fully resolved configuration; rerunning from it reproduces the outputs.
    pub config: ScenarioConfig,
}

impl Manifest {
    pub fn new(command: Command, config: ScenarioConfig, workers: Option<usize>) -> Self {
        Self { version: env!("PERISH_VERSION").to_string(), schema: SCHEMA_VERSION, command, seed: config.seed, workers, config }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

pub fn mark_failed(dir: &Path, e: &Error) {
    let _ = std::fs::write(dir.join("FAILED"), format!("{e}\n"));
}

pub fn write_csv<T: Serialize>(dir: &Path, name: &str, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(dir.join(name)).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Domain(format!("csv: {other:?}")),
    }
}

/// One row of `results.csv`.
#[derive(Debug, Clone, Default, Serialize)]
pub struct ResultRow {
    pub schema: u32,
    pub scenario: String,
    pub policy: String,
    pub method: String,
    pub cost: f64,
    pub cost_ci_lo: f64,
    pub cost_ci_hi: f64,
    pub reference: Option<f64>,
    pub gap_percent: Option<f64>,
    pub gap_half_width: Option<f64>,
    pub shortage_rate: Option<f64>,
    pub expiry_rate: Option<f64>,
    pub order_frequency: Option<f64>,
    pub avg_order_size: Option<f64>,
    pub avg_holding: Option<f64>,
}

impl ResultRow {
    pub fn exact(scenario: &str, policy: &str, cost: f64, optimum: Option<f64>) -> Self {
        Self {
            schema: SCHEMA_VERSION,
            scenario: scenario.into(),
            policy: policy.into(),
            method: "exact".into(),
            cost,
            cost_ci_lo: cost,
            cost_ci_hi: cost,
            reference: optimum,
            gap_percent: optimum.map(|o| 100.0 * (cost / o - 1.0)),
            gap_half_width: optimum.map(|_| 0.0),
            ..Self::default()
        }
    }

    pub fn estimate(scenario: &str, policy: &str, method: &str, e: Estimate) -> Self {
        Self {
            schema: SCHEMA_VERSION,
            scenario: scenario.into(),
            policy: policy.into(),
            method: method.into(),
            cost: e.mean,
            cost_ci_lo: e.lo(),
            cost_ci_hi: e.hi(),
            ..Self::default()
        }
    }

    pub fn simulated(scenario: &str, policy: &str, method: &str, r: &EvaluationReport) -> Self {
        Self {
            shortage_rate: Some(r.shortage_rate.mean),
            expiry_rate: Some(r.expiry_rate.mean),
            order_frequency: Some(r.order_frequency.mean),
            avg_order_size: Some(r.avg_order_size.mean),
            avg_holding: Some(r.avg_holding.mean),
            ..Self::estimate(scenario, policy, method, r.cost)
        }
    }

    pub fn with_gap(mut self, reference: f64, gap: Gap) -> Self {
        self.reference = Some(reference);
        self.gap_percent = Some(gap.percent);
        self.gap_half_width = Some(gap.half_width);
        self
    }
}

/// Plot-data series: `series,x,y,ci_lo,ci_hi`.
#[derive(Debug, Clone, Serialize)]
pub struct PlotPoint {
    pub series: String,
    pub x: f64,
    pub y: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

impl PlotPoint {
    pub fn exact(series: &str, x: f64, y: f64) -> Self {
        Self { series: series.into(), x, y, ci_lo: y, ci_hi: y }
    }
}
