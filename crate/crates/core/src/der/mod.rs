//! DER unit behavior: frequency droop with a deadband, command limiting
//! against available solar power and granted headroom, and a first-order
//! output tracking loop. An aggregator federate fans AGC commands and
//! feeder headroom grants out to its units.

mod aggregator;
mod mppt;
mod unit;

pub use aggregator::{AggregatorFederate, AggregatorRecord};
pub use mppt::MpptSeries;
pub use unit::{envelope_respected, DerParams, DerUnit, StepOutcome};

/// DER module errors.
#[derive(Debug, Clone, thiserror::Error)]
pub enum DerError {
    #[error("available-power series is empty")]
    EmptySeries,
    #[error("available-power series times must be strictly increasing at row {0}")]
    UnsortedSeries(usize),
    #[error("cannot sample available power at negative time {0}")]
    NegativeTime(f64),
    #[error("available-power series row {row}: {message}")]
    Parse { row: usize, message: String },
    #[error("reading available-power series: {0}")]
    Io(String),
}
