//! Positive-sequence transmission dynamics.
//!
//! A grid description parses into [`Grid`], solves an initial power flow,
//! and becomes a [`GridModel`]: a mass-matrix DAE with classical
//! generators, turbine-governors, and DER injections, integrated at a
//! fixed internal step by the transmission federate.

mod federate;
mod grid;
mod model;
mod power_flow;
mod ybus;

pub use federate::{DerTrace, TransmissionFederate, TransmissionSeries};
pub use grid::{Branch, Bus, GenParams, Grid, GridEvent, LoadModel, NativeLoad};
pub use model::{GenState, GridModel};
pub use power_flow::{solve_power_flow, PowerFlowSolution};
pub use ybus::build_ybus;

/// Transmission-side failures.
#[derive(Debug, thiserror::Error)]
pub enum TransmissionError {
    #[error("grid {grid:?}: {message}")]
    InvalidGrid { grid: String, message: String },
    #[error("bus {bus:?} is not connected to the slack bus")]
    Islanded { bus: String },
    #[error(
        "power flow did not converge in {iterations} iterations; \
         worst mismatch {mismatch:.3e} pu at bus {bus:?}"
    )]
    PowerFlowDiverged {
        iterations: usize,
        mismatch: f64,
        bus: String,
    },
    #[error("unknown element {0:?}")]
    UnknownElement(String),
    #[error("tripping {0:?} would remove the last online generator")]
    LastSourceTrip(String),
    #[error("bus {0:?} is not a boundary bus")]
    NotBoundary(String),
    #[error("timing configuration invalid: {0}")]
    BadTiming(String),
    #[error("integration failed: {0}")]
    Integration(#[from] crate::dae::DaeError),
    #[error("algebraic re-solve failed after event: residual {0:.3e}")]
    AlgebraicResolve(f64),
    #[error(transparent)]
    Parse(#[from] GridParseError),
}

/// Grid file syntax/semantics problems.
#[derive(Debug, thiserror::Error)]
#[error("grid file: {0}")]
pub struct GridParseError(pub String);
