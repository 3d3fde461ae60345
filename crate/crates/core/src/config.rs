//! Scenario configuration files with named-preset inheritance and scale presets
//! for replication budgets.
//!
//! A file either spells out a full configuration or names a preset and
//! overrides parts of it:
//!
//! ```toml
//! preset = "m3-base-s1-f10-th80"
//! seed = 11
//! [costs]
//! wastage = 20.0
//! ```
//!
//! Tables merge key by key. A table whose `kind` differs from the inherited
//! one replaces it outright.

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::adp::{AdpSettings, GreedyMode};
use crate::demand::{NbParams, PeriodicDemandModel};
use crate::error::{Error, Result};
use crate::exact_dp::SolveOptions;
use crate::mdp::{CostParams, Scenario};
use crate::presets;
use crate::shelflife::ShelfLifeModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DemandConfig {
    /// Seven weekday negative binomials, fitted parameters.
    Weekday {
        truncation: usize,
    },
    /// Seven weekday negative binomials, rounded parameters.
    WeekdayRounded {
        truncation: usize,
    },
    /// Fitted parameters with mean and variance doubled.
    WeekdayDoubled {
        truncation: usize,
    },
    NegativeBinomial {
        truncation: usize,
        n: Vec<f64>,
        mean: Vec<f64>,
    },
    PointMass {
        truncation: usize,
        period: usize,
        value: usize,
    },
}

impl DemandConfig {
    pub fn truncation(&self) -> usize {
        match *self {
            Self::Weekday { truncation }
            | Self::WeekdayRounded { truncation }
            | Self::WeekdayDoubled { truncation }
            | Self::NegativeBinomial { truncation, .. }
            | Self::PointMass { truncation, .. } => truncation,
        }
    }

    pub fn build(&self) -> Result<PeriodicDemandModel> {
        let m = self.truncation();
        if !(1..=200).contains(&m) {
            return Err(Error::Config(format!("demand.truncation must lie in 1..=200, got {m}")));
        }
        Ok(match self {
            Self::Weekday { .. } => PeriodicDemandModel::weekday(m),
            Self::WeekdayRounded { .. } => PeriodicDemandModel::weekday_rounded(m),
            Self::WeekdayDoubled { .. } => PeriodicDemandModel::weekday_doubled(m),
            Self::NegativeBinomial { n, mean, .. } => {
                if n.len() != mean.len() {
                    return Err(Error::Config(format!("demand.n has {} entries but demand.mean has {}", n.len(), mean.len())));
                }
                let params = n.iter().zip(mean).map(|(&n, &mean)| NbParams { n, mean }).collect();
                PeriodicDemandModel::negative_binomial(params, m)?
            }
            Self::PointMass { period, value, .. } => PeriodicDemandModel::point_mass(*period, *value, m)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iters: usize,
    /// Lifts the `m <= 3` guard of the exact solvers.
    pub allow_large: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let d = SolveOptions::default();
        Self { tol: d.tol, max_iters: d.max_iters, allow_large: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GreedyModeConfig {
    Auto,
    Exact,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdpConfig {
    pub choice: u8,
    pub replications: usize,
    pub horizon: usize,
    pub iterations: usize,
    pub estimate_replications: usize,
    pub mc_samples: usize,
    pub mode: GreedyModeConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lookahead: Option<usize>,
}

impl Default for AdpConfig {
    fn default() -> Self {
        Self {
            choice: 2,
            replications: 30,
            horizon: 100,
            iterations: 20,
            estimate_replications: 1000,
            mc_samples: 1000,
            mode: GreedyModeConfig::Auto,
            lookahead: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundConfig {
    pub replications: usize,
}

impl Default for BoundConfig {
    fn default() -> Self {
        Self { replications: 4000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub horizon: usize,
    pub replications: usize,
    /// One-column demand CSV replayed by `evaluate`; a synthetic trace is used when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<String>,
    /// Length of the synthetic trace.
    pub trace_length: usize,
    /// Shelf-life replications per trace.
    pub trace_replications: usize,
    /// Simulated periods behind the exogenous refit.
    pub refit_periods: usize,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self { horizon: 100, replications: 1000, trace: None, trace_length: 364, trace_replications: 1000, refit_periods: 3000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub costs: CostParams,
    pub demand: DemandConfig,
    pub shelf_life: ShelfLifeModel,
    /// Per-age inventory cap; defaults to the demand truncation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inventory_cap: Option<usize>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub adp: AdpConfig,
    #[serde(default)]
    pub bound: BoundConfig,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
}

fn default_seed() -> u64 {
    2024
}

impl ScenarioConfig {
    pub fn m(&self) -> usize {
        self.shelf_life.max_shelf_life()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Err(Error::Config(format!("{field}: {msg}")));
        if self.name.trim().is_empty() {
            return bad("name", "must not be empty".into());
        }
        if self.seed > i64::MAX as u64 {
            return bad("seed", format!("must be at most {}", i64::MAX));
        }
        self.costs.validate().map_err(|e| Error::Config(format!("costs: {e}")))?;
        self.demand.build().map_err(|e| Error::Config(format!("demand: {e}")))?;
        match &self.shelf_life {
            ShelfLifeModel::Logit { intercepts, slopes } => {
                ShelfLifeModel::logit(intercepts.clone(), slopes.clone()).map_err(|e| Error::Config(format!("shelf_life: {e}")))?;
            }
            ShelfLifeModel::Deterministic { m } if *m < 2 => return bad("shelf_life.m", format!("must be at least 2, got {m}")),
            ShelfLifeModel::Deterministic { .. } => {}
        }
        if self.m() > 10 {
            return bad("shelf_life", format!("at most 10 shelf-life categories are supported, got {}", self.m()));
        }
        if let Some(cap) = self.inventory_cap {
            if !(1..=200).contains(&cap) {
                return bad("inventory_cap", format!("must lie in 1..=200, got {cap}"));
            }
        }
        let s = &self.solver;
        if !(s.tol > 0.0 && s.tol.is_finite()) || s.max_iters == 0 {
            return bad("solver", format!("need tol > 0 and max_iters >= 1, got {s:?}"));
        }
        self.adp_settings().validate().map_err(|e| Error::Config(format!("adp: {e}")))?;
        if self.adp.mc_samples == 0 {
            return bad("adp.mc_samples", "must be at least 1".into());
        }
        if self.bound.replications < 2 {
            return bad("bound.replications", format!("must be at least 2, got {}", self.bound.replications));
        }
        let e = &self.evaluation;
        if e.horizon == 0 || e.replications < 2 || e.trace_replications < 2 || e.trace_length == 0 || e.refit_periods == 0 {
            return bad("evaluation", format!("need horizon, trace_length, refit_periods >= 1 and replications >= 2, got {e:?}"));
        }
        Ok(())
    }

    pub fn scenario(&self) -> Result<Scenario> {
        let demand = self.demand.build()?;
        let cap = self.inventory_cap.unwrap_or(demand.truncation());
        Scenario::with_cap(demand, self.shelf_life.clone(), self.costs, cap)
    }

    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            tol: self.solver.tol,
            max_iters: self.solver.max_iters,
            allow_large: self.solver.allow_large,
            ..SolveOptions::default()
        }
    }

    pub fn adp_settings(&self) -> AdpSettings {
        let a = &self.adp;
        AdpSettings {
            choice: a.choice,
            replications: a.replications,
            horizon: a.horizon,
            iterations: a.iterations,
            estimate_replications: a.estimate_replications,
            mc_samples: a.mc_samples,
            mode: match a.mode {
                GreedyModeConfig::Auto => None,
                GreedyModeConfig::Exact => Some(GreedyMode::Exact),
                GreedyModeConfig::MonteCarlo => Some(GreedyMode::MonteCarlo { samples: a.mc_samples }),
            },
            lookahead: a.lookahead,
        }
    }

    /// Parses a configuration, resolving `preset = "<name>"` against the catalog.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let cfg: Self = match table.remove("preset") {
            None => toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?,
            Some(toml::Value::String(name)) => {
                let base = presets::preset(&name).ok_or_else(|| Error::UnknownPreset(name.clone()))?;
                let mut merged = toml::Value::try_from(&base).map_err(|e| Error::Config(e.to_string()))?;
                merge(&mut merged, toml::Value::Table(table));
                let resolved = toml::to_string(&merged).map_err(|e| Error::Config(e.to_string()))?;
                toml::from_str(&resolved).map_err(|e| Error::Config(format!("after applying overrides to preset `{name}`: {e}")))?
            }
            Some(other) => return Err(Error::Config(format!("preset: expected a string, got {other}"))),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Replaces the replication budgets with those of `scale`.
    pub fn with_scale(mut self, scale: Scale) -> Self {
        let b = scale.budget(self.m());
        self.adp.replications = b.adp_replications;
        self.adp.horizon = b.horizon;
        self.adp.iterations = b.adp_iterations;
        self.adp.estimate_replications = b.evaluation_replications;
        self.adp.mc_samples = b.mc_samples;
        self.bound.replications = b.bound_replications;
        self.evaluation.horizon = b.horizon;
        self.evaluation.replications = b.evaluation_replications;
        self.evaluation.trace_replications = b.evaluation_replications;
        self.evaluation.refit_periods = b.refit_periods;
        self
    }
}

fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            if let (Some(bk), Some(ok)) = (b.get("kind"), o.get("kind")) {
                if bk != ok {
                    *b = o;
                    return;
                }
            }
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scale {
    /// The full replication budgets.
    Paper,
    /// Roughly a fifth of the full budgets.
    Desk,
    /// Seconds-long runs for plumbing checks.
    Smoke,
}

impl FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "paper" => Ok(Self::Paper),
            "desk" => Ok(Self::Desk),
            "smoke" => Ok(Self::Smoke),
            _ => Err(Error::Config(format!("unknown scale `{s}` (expected paper, desk or smoke)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    pub adp_replications: usize,
    pub adp_iterations: usize,
    pub horizon: usize,
    pub mc_samples: usize,
    pub bound_replications: usize,
    pub evaluation_replications: usize,
    pub refit_periods: usize,
}

impl Scale {
    /// Budgets by scale. With `m <= 3` the greedy step is exact and cheap, so
    /// the desk scale keeps the full training budget.
    pub fn budget(self, m: usize) -> Budget {
        match self {
            Self::Paper => Budget {
                adp_replications: 30,
                adp_iterations: 20,
                horizon: 100,
                mc_samples: 1000,
                bound_replications: 4000,
                evaluation_replications: 1000,
                refit_periods: 3000,
            },
            Self::Desk if m <= 3 => Budget {
                adp_replications: 30,
                adp_iterations: 20,
                horizon: 100,
                mc_samples: 200,
                bound_replications: 800,
                evaluation_replications: 200,
                refit_periods: 3000,
            },
            Self::Desk => Budget {
                adp_replications: 10,
                adp_iterations: 5,
                horizon: 100,
                mc_samples: 100,
                bound_replications: 800,
                evaluation_replications: 100,
                refit_periods: 3000,
            },
            Self::Smoke => Budget {
                adp_replications: 3,
                adp_iterations: 2,
                horizon: 50,
                mc_samples: 50,
                bound_replications: 50,
                evaluation_replications: 20,
                refit_periods: 500,
            },
        }
    }
}
