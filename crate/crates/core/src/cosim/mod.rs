//! Conservative, deterministic co-simulation kernel.
//!
//! Federates declare an exchange interval plus published and subscribed
//! topics. A broker grants simulation time conservatively (never past the
//! point a peer could still send data for) and routes timestamped values
//! between federates, optionally injecting per-topic latency and seeded
//! random message drop.

mod kernel;
mod log;

pub use kernel::{
    run_federation, Broker, Federate, FederateHandle, FederationConfig, LinkQuality,
    PublishContext,
};
pub use log::{FederationLog, LogEntry};

use crate::Cplx;

/// Simulation time with microsecond resolution.
///
/// Exchange cadences are sub-second but coarse (0.5 s, 1 s, 4 s, 10 s), so
/// an integer microsecond count represents every grant instant exactly and
/// keeps time comparisons free of floating-point drift.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub const fn from_micros(micros: u64) -> Self {
        Self(micros)
    }

    /// Rounds to the nearest microsecond.
    pub fn from_secs_f64(seconds: f64) -> Self {
        assert!(
            seconds >= 0.0 && seconds.is_finite(),
            "time must be finite and non-negative"
        );
        Self((seconds * 1e6).round() as u64)
    }

    pub fn as_micros(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e6
    }

    /// True when this instant lies on the grid of the given period.
    pub fn is_multiple_of(self, period: SimTime) -> bool {
        period.0 != 0 && self.0.is_multiple_of(period.0)
    }

    pub fn saturating_sub(self, other: SimTime) -> SimTime {
        Self(self.0.saturating_sub(other.0))
    }
}

impl std::ops::Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl std::fmt::Display for SimTime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}.{:06}", self.0 / 1_000_000, self.0 % 1_000_000)
    }
}

/// Payload kinds a topic can carry; fixed per topic by first publish.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueKind {
    Scalar,
    Complex,
    ComplexTriple,
}

/// Message payload.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value {
    Scalar(f64),
    Complex(Cplx),
    ComplexTriple([Cplx; 3]),
}

impl Value {
    pub fn kind(&self) -> ValueKind {
        match self {
            Value::Scalar(_) => ValueKind::Scalar,
            Value::Complex(_) => ValueKind::Complex,
            Value::ComplexTriple(_) => ValueKind::ComplexTriple,
        }
    }

    pub fn as_scalar(&self) -> Option<f64> {
        match self {
            Value::Scalar(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_complex(&self) -> Option<Cplx> {
        match self {
            Value::Complex(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_complex_triple(&self) -> Option<[Cplx; 3]> {
        match self {
            Value::ComplexTriple(v) => Some(*v),
            _ => None,
        }
    }

    /// Canonical text form used by the federation log.
    pub fn canonical(&self) -> String {
        fn c(z: &Cplx) -> String {
            format!("({:e},{:e})", z.re, z.im)
        }
        match self {
            Value::Scalar(v) => format!("{v:e}"),
            Value::Complex(z) => c(z),
            Value::ComplexTriple([a, b, d]) => format!("[{},{},{}]", c(a), c(b), c(d)),
        }
    }
}

/// Declaration of a federate: its identity, external data cadence, and
/// topic sets.
#[derive(Debug, Clone)]
pub struct FederateDecl {
    pub name: String,
    /// External data cadence; peers may be granted up to this far past the
    /// federate's own clock.
    pub exchange_interval: SimTime,
    pub publications: Vec<String>,
    pub subscriptions: Vec<String>,
}

impl FederateDecl {
    pub fn new(name: impl Into<String>, exchange_interval: SimTime) -> Self {
        Self {
            name: name.into(),
            exchange_interval,
            publications: Vec::new(),
            subscriptions: Vec::new(),
        }
    }

    pub fn publishes(mut self, topic: impl Into<String>) -> Self {
        self.publications.push(topic.into());
        self
    }

    pub fn subscribes(mut self, topic: impl Into<String>) -> Self {
        self.subscriptions.push(topic.into());
        self
    }
}

/// A routed message as seen by the receiving federate.
#[derive(Debug, Clone)]
pub struct Message {
    pub topic: String,
    pub value: Value,
    pub publish_time: SimTime,
    pub deliver_time: SimTime,
}

/// A granted simulation time together with the messages that became
/// deliverable at or before it.
#[derive(Debug, Clone)]
pub struct TimeGrant {
    pub federate: String,
    pub granted_time: SimTime,
    pub inputs: Vec<Message>,
}

impl TimeGrant {
    /// Latest input on `topic`, if any arrived with this grant.
    pub fn latest(&self, topic: &str) -> Option<&Message> {
        self.inputs.iter().rev().find(|m| m.topic == topic)
    }
}

/// Kernel errors.
#[derive(Debug, Clone, thiserror::Error)]
pub enum CosimError {
    #[error("federate name {0:?} is already registered")]
    DuplicateName(String),
    #[error("topic {topic:?} is already published by {publisher:?}")]
    DuplicatePublication { topic: String, publisher: String },
    #[error("federate {federate:?} subscribes to {topic:?} which no federate publishes")]
    UnboundSubscription { federate: String, topic: String },
    #[error("exchange interval of federate {0:?} must be positive")]
    InvalidInterval(String),
    #[error("federate {federate:?} does not publish topic {topic:?}")]
    UnknownTopic { federate: String, topic: String },
    #[error(
        "non-monotone request by {federate:?}: requested {requested} at granted time {granted}"
    )]
    NonMonotoneRequest {
        federate: String,
        requested: SimTime,
        granted: SimTime,
    },
    #[error("publish by {federate:?} at {publish_time} but its granted time is {granted}")]
    TimeMismatch {
        federate: String,
        publish_time: SimTime,
        granted: SimTime,
    },
    #[error("topic {topic:?} carries {expected:?} payloads, got {got:?}")]
    PayloadTypeMismatch {
        topic: String,
        expected: ValueKind,
        got: ValueKind,
    },
    #[error("federation already started")]
    AlreadyStarted,
    #[error("federation not started")]
    NotStarted,
    #[error("federation deadlock; pending requests:\n{diagnostic}")]
    Deadlock { diagnostic: String },
    #[error("federate {federate:?} failed: {message}")]
    Federate { federate: String, message: String },
}
