//! Scenario orchestration: configuration files, stochastic load series,
//! federation assembly and execution, result collection, and CSV output.

mod config;
mod harness;
mod noise;
mod output;
mod results;

pub use config::{
    load_scenario, AgcScenarioConfig, Cadences, DerConfig, EventConfig, FeederBinding,
    FederationLinkConfig, FederationScenarioConfig, LoadNoiseConfig, Scenario,
};
pub use harness::{run, validate, RunOverrides};
pub use noise::{load_multiplier_rows, load_multiplier_series};
pub use output::emit_outputs;
pub use results::{RunResults, SummaryStats};

use crate::agc::AgcError;
use crate::cosim::CosimError;
use crate::der::DerError;
use crate::distribution::FeederError;
use crate::headroom::HeadroomError;
use crate::transmission::TransmissionError;

/// Scenario-level failures.
#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("scenario {path}: {message}")]
    Parse { path: String, message: String },
    #[error("scenario invalid: {0}")]
    Validation(String),
    #[error("io: {0}")]
    Io(String),
    #[error(transparent)]
    Transmission(#[from] TransmissionError),
    #[error(transparent)]
    Feeder(#[from] FeederError),
    #[error(transparent)]
    Agc(#[from] AgcError),
    #[error(transparent)]
    Headroom(#[from] HeadroomError),
    #[error(transparent)]
    Der(#[from] DerError),
    #[error(transparent)]
    Cosim(#[from] CosimError),
    #[error(
        "initialization handshake did not converge in {iterations} rounds \
         (last boundary voltage change {residual:.3e} pu)"
    )]
    HandshakeDiverged { iterations: usize, residual: f64 },
}
