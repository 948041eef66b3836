//! Agent-based simulation of payment outages: how infrastructure failures
//! propagate through customer trust, merchant signalling and social contagion
//! into deposit outflows.

pub mod agents;
pub mod audit;
pub mod behavior;
pub mod config;
pub mod engine;
pub mod liquidity;
pub mod merchants;
pub mod network;
pub mod output;
pub mod rng;
pub mod scenario;

pub use config::{Config, ConfigError};
pub use engine::{run, run_batch, run_paired, RunOutput, RunSummary, Simulation};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(#[from] ConfigError),
    #[error("paired configurations differ outside policy fields")]
    NotPolicy,
    #[error("no seeds given")]
    NoSeeds,
    #[error("seed {seed}: {source}")]
    Run { seed: u64, source: Box<Error> },
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}
