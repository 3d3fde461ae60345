//! `perish`: runs the experiment pipelines on a scenario configuration.
//!
//! Exit codes: 0 success, 1 solver failure, 2 usage or configuration error.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use perish::config::{Scale, ScenarioConfig};
use perish::error::Error;
use perish::presets;
use serde::{Deserialize, Serialize};

use crate::output::Manifest;

#[derive(Debug, Parser)]
#[command(name = "perish", version = env!("PERISH_VERSION"), about = "Perishable inventory with order-size-dependent shelf-life")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Scenario configuration file (TOML, may name a preset to inherit from).
    #[arg(long, global = true, env = "PERISH_CONFIG")]
    config: Option<PathBuf>,

    /// Named preset, used when no configuration file is given.
    #[arg(long, global = true, env = "PERISH_PRESET")]
    preset: Option<String>,

    #[arg(long, global = true, env = "PERISH_SEED")]
    seed: Option<u64>,

    /// Worker threads (defaults to all cores; results do not depend on it).
    #[arg(long, global = true, env = "PERISH_WORKERS")]
    workers: Option<usize>,

    /// Output directory.
    #[arg(long, global = true, env = "PERISH_OUT", default_value = "out")]
    out: PathBuf,

    /// ADP policy-improvement steps (N).
    #[arg(long, global = true, env = "PERISH_ITERS")]
    iters: Option<usize>,

    /// ADP training trajectories per iteration (Q).
    #[arg(long, global = true, env = "PERISH_REPS")]
    reps: Option<usize>,

    /// Periods per trajectory for training and evaluation (H).
    #[arg(long, global = true, env = "PERISH_HORIZON")]
    horizon: Option<usize>,

    /// Replication budgets; overrides the ones in the configuration.
    #[arg(long, global = true, env = "PERISH_SCALE", value_enum)]
    scale: Option<ScaleArg>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Subcommand)]
#[serde(rename_all = "kebab-case")]
enum Command {
    /// Value iteration with structural witnesses (m <= 3).
    Exact,
    /// Approximate policy iteration.
    Adp,
    /// Evaluate the myopic policy.
    Myopic,
    /// Information-relaxation lower bound.
    Bound,
    /// Cost of ignoring shelf-life uncertainty or its order-size dependence.
    Impact,
    /// Replay a demand trace under the benchmark policies.
    Evaluate,
    /// List the preset catalog.
    Presets,
    /// Repeat the run recorded in a manifest.
    #[serde(skip)]
    Rerun { manifest: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ScaleArg {
    Paper,
    Desk,
    Smoke,
}

impl From<ScaleArg> for Scale {
    fn from(s: ScaleArg) -> Self {
        match s {
            ScaleArg::Paper => Scale::Paper,
            ScaleArg::Desk => Scale::Desk,
            ScaleArg::Smoke => Scale::Smoke,
        }
    }
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    UnknownPreset(String),
    Solver(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(msg) => Self::Usage(msg),
            Error::UnknownPreset(name) => Self::UnknownPreset(name),
            other => Self::Solver(other),
        }
    }
}

fn resolve(cli: &Cli) -> Result<ScenarioConfig, Failure> {
    let mut cfg = match (&cli.config, &cli.preset) {
        (Some(path), _) => ScenarioConfig::load(path).map_err(|e| match e {
            Error::Io(io) => Failure::Usage(format!("{}: {io}", path.display())),
            other => other.into(),
        })?,
        (None, Some(name)) => presets::preset(name).ok_or_else(|| Failure::UnknownPreset(name.clone()))?,
        (None, None) => return Err(Failure::Usage("either --config or --preset is required".into())),
    };
    if let Some(scale) = cli.scale {
        cfg = cfg.with_scale(scale.into());
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(n) = cli.iters {
        cfg.adp.iterations = n;
    }
    if let Some(q) = cli.reps {
        cfg.adp.replications = q;
    }
    if let Some(h) = cli.horizon {
        cfg.adp.horizon = h;
        cfg.evaluation.horizon = h;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), Failure> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(Failure::Usage("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Usage(format!("cannot start {n} workers: {e}")))?;
    }
    let (command, cfg) = match &cli.command {
        Command::Presets => {
            for c in presets::catalog() {
                println!("{:<28} {}", c.name, c.description);
            }
            return Ok(());
        }
        Command::Rerun { manifest } => {
            let m = Manifest::load(manifest).map_err(|e| Failure::Usage(format!("{}: {e}", manifest.display())))?;
            m.config.validate()?;
            (m.command, m.config)
        }
        other => (other.clone(), resolve(cli)?),
    };
    std::fs::create_dir_all(&cli.out).map_err(|e| Failure::Usage(format!("{}: {e}", cli.out.display())))?;
    let manifest = Manifest::new(command.clone(), cfg.clone(), cli.workers);
    manifest.write(&cli.out).map_err(Failure::Solver)?;
    let result = commands::dispatch(command, &cfg, &cli.out);
    if let Err(e) = &result {
        output::mark_failed(&cli.out, e);
    }
    result.map_err(Failure::Solver)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::UnknownPreset(name)) => {
            eprintln!("error: unknown preset `{name}`; valid presets:");
            for n in presets::names() {
                eprintln!("  {n}");
            }
            ExitCode::from(2)
        }
        Err(Failure::Solver(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
