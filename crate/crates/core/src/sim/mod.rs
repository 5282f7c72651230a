//! Multi-robot target tracking experiment and its Monte Carlo harness.

pub mod centralized;
pub mod config;
pub mod metrics;
pub mod monte_carlo;
pub mod rng;
pub mod runner;
pub mod truth;

pub use config::{ExchangeProtocol, FilterTiming, ScenarioConfig};
pub use monte_carlo::{monte_carlo, MonteCarloOptions, MonteCarloSummary, RobotSummary};
pub use runner::{simulate_run, EdgeRecord, RunResult, Simulation, StepRecord};
