//! Deterministic record of every grant, publish, and delivery.

use super::{SimTime, Value};

/// One event in the federation history.
#[derive(Debug, Clone, PartialEq)]
pub enum LogEntry {
    Grant {
        federate: String,
        time: SimTime,
        inputs: usize,
    },
    Publish {
        federate: String,
        topic: String,
        time: SimTime,
        deliver_time: SimTime,
        value: Value,
        dropped: bool,
    },
    Deliver {
        federate: String,
        topic: String,
        deliver_time: SimTime,
        granted_time: SimTime,
    },
}

/// Append-only event history of a federation run. Two runs with identical
/// scenarios and seeds produce identical logs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FederationLog {
    pub entries: Vec<LogEntry>,
}

impl FederationLog {
    pub(crate) fn push(&mut self, entry: LogEntry) {
        self.entries.push(entry);
    }

    /// Times at which `topic` was published (dropped messages included:
    /// the publish happened even if delivery did not).
    pub fn publish_times(&self, topic: &str) -> Vec<SimTime> {
        self.entries
            .iter()
            .filter_map(|e| match e {
                LogEntry::Publish { topic: t, time, .. } if t == topic => Some(*time),
                _ => None,
            })
            .collect()
    }

    /// Published (time, value) pairs for `topic`, excluding dropped messages.
    pub fn publishes(&self, topic: &str) -> Vec<(SimTime, Value)> {
        self.entries
            .iter()
            .filter_map(|e| match e {
                LogEntry::Publish {
                    topic: t,
                    time,
                    value,
                    dropped: false,
                    ..
                } if t == topic => Some((*time, *value)),
                _ => None,
            })
            .collect()
    }

    /// Granted times for `federate`, in order.
    pub fn grant_times(&self, federate: &str) -> Vec<SimTime> {
        self.entries
            .iter()
            .filter_map(|e| match e {
                LogEntry::Grant {
                    federate: f, time, ..
                } if f == federate => Some(*time),
                _ => None,
            })
            .collect()
    }

    /// Number of deliveries of `topic` to `federate`.
    pub fn delivery_count(&self, federate: &str, topic: &str) -> usize {
        self.entries
            .iter()
            .filter(|e| {
                matches!(e, LogEntry::Deliver { federate: f, topic: t, .. }
                    if f == federate && t == topic)
            })
            .count()
    }

    /// Canonical text serialization, one line per entry.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            match e {
                LogEntry::Grant {
                    federate,
                    time,
                    inputs,
                } => {
                    out.push_str(&format!("grant {federate} t={time} inputs={inputs}\n"));
                }
                LogEntry::Publish {
                    federate,
                    topic,
                    time,
                    deliver_time,
                    value,
                    dropped,
                } => {
                    out.push_str(&format!(
                        "publish {federate} {topic} t={time} deliver={deliver_time} value={} dropped={dropped}\n",
                        value.canonical()
                    ));
                }
                LogEntry::Deliver {
                    federate,
                    topic,
                    deliver_time,
                    granted_time,
                } => {
                    out.push_str(&format!(
                        "deliver {federate} {topic} deliver={deliver_time} granted={granted_time}\n"
                    ));
                }
            }
        }
        out
    }
}
