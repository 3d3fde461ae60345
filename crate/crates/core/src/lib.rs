pub mod adp;
pub mod baselines;
pub mod bounds;
pub mod config;
pub mod demand;
pub mod engine;
pub mod error;
pub mod evaluation;
pub mod exact_dp;
pub mod experiment;
pub mod mdp;
pub mod policy;
pub mod presets;
pub mod rng;
pub mod shelflife;
pub mod simulate;
pub mod stats;
