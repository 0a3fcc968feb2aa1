//! Broker, time grants, message routing, and the federation run loop.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::log::{FederationLog, LogEntry};
use super::{CosimError, FederateDecl, Message, SimTime, TimeGrant, Value, ValueKind};

/// Opaque identifier of a registered federate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FederateHandle(usize);

/// Per-topic transport quality.
#[derive(Debug, Clone, Copy)]
pub struct LinkQuality {
    /// Added to the publish time to obtain the deliver time.
    pub latency: SimTime,
    /// Probability in [0, 1] that a published message is discarded.
    pub drop_probability: f64,
}

impl Default for LinkQuality {
    fn default() -> Self {
        Self {
            latency: SimTime::ZERO,
            drop_probability: 0.0,
        }
    }
}

/// Federation-wide configuration.
#[derive(Debug, Clone)]
pub struct FederationConfig {
    /// Seed of the kernel RNG used for message-drop decisions.
    pub seed: u64,
    /// Per-topic transport quality; unlisted topics are ideal.
    pub links: BTreeMap<String, LinkQuality>,
    /// When true (the default), a message with deliver time `t` is consumed
    /// by the first grant at or after `t`; when false, strictly after `t`.
    /// This selects which side of an exchange boundary carries the data and
    /// shifts the coupling lag by one interval.
    pub inclusive_delivery: bool,
}

impl Default for FederationConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            links: BTreeMap::new(),
            inclusive_delivery: true,
        }
    }
}

#[derive(Debug)]
struct QueuedMessage {
    message: Message,
    seq: u64,
}

#[derive(Debug)]
struct FederateState {
    decl: FederateDecl,
    granted: SimTime,
    initialized: bool,
    done: bool,
    mailbox: Vec<QueuedMessage>,
}

#[derive(Debug)]
struct TopicState {
    publisher: usize,
    kind: Option<ValueKind>,
    subscribers: Vec<usize>,
}

/// The federation coordinator: registers federates, grants time, routes
/// messages, records the log.
#[derive(Debug)]
pub struct Broker {
    federates: Vec<FederateState>,
    names: BTreeMap<String, usize>,
    topics: BTreeMap<String, TopicState>,
    started: bool,
    config: FederationConfig,
    rng: ChaCha8Rng,
    log: FederationLog,
    seq: u64,
}

impl Broker {
    pub fn new(config: FederationConfig) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Self {
            federates: Vec::new(),
            names: BTreeMap::new(),
            topics: BTreeMap::new(),
            started: false,
            config,
            rng,
            log: FederationLog::default(),
            seq: 0,
        }
    }

    /// Registers a federate before the federation starts. Its publications
    /// become routable topics; subscriptions are checked at [`Broker::start`].
    pub fn register_federate(&mut self, decl: FederateDecl) -> Result<FederateHandle, CosimError> {
        if self.started {
            return Err(CosimError::AlreadyStarted);
        }
        if decl.exchange_interval == SimTime::ZERO {
            return Err(CosimError::InvalidInterval(decl.name.clone()));
        }
        if self.names.contains_key(&decl.name) {
            return Err(CosimError::DuplicateName(decl.name.clone()));
        }
        let index = self.federates.len();
        for topic in &decl.publications {
            if let Some(existing) = self.topics.get(topic) {
                return Err(CosimError::DuplicatePublication {
                    topic: topic.clone(),
                    publisher: self.federates[existing.publisher].decl.name.clone(),
                });
            }
            self.topics.insert(
                topic.clone(),
                TopicState {
                    publisher: index,
                    kind: None,
                    subscribers: Vec::new(),
                },
            );
        }
        self.names.insert(decl.name.clone(), index);
        self.federates.push(FederateState {
            decl,
            granted: SimTime::ZERO,
            initialized: false,
            done: false,
            mailbox: Vec::new(),
        });
        Ok(FederateHandle(index))
    }

    /// Validates subscription wiring and freezes registration.
    pub fn start(&mut self) -> Result<(), CosimError> {
        if self.started {
            return Err(CosimError::AlreadyStarted);
        }
        for fed in &self.federates {
            for topic in &fed.decl.subscriptions {
                if !self.topics.contains_key(topic) {
                    return Err(CosimError::UnboundSubscription {
                        federate: fed.decl.name.clone(),
                        topic: topic.clone(),
                    });
                }
            }
        }
        for (index, fed) in self.federates.iter().enumerate() {
            for topic in &fed.decl.subscriptions {
                self.topics
                    .get_mut(topic)
                    .expect("validated above")
                    .subscribers
                    .push(index);
            }
        }
        self.started = true;
        Ok(())
    }

    pub fn granted_time(&self, handle: FederateHandle) -> SimTime {
        self.federates[handle.0].granted
    }

    /// Marks a federate as finished: it no longer constrains peers' grants.
    pub fn set_done(&mut self, handle: FederateHandle) {
        self.federates[handle.0].done = true;
    }

    /// The latest time grantable to `handle`: the minimum over all other
    /// unfinished federates of their granted time plus exchange interval.
    pub fn barrier(&self, handle: FederateHandle) -> SimTime {
        let mut barrier = SimTime::from_micros(u64::MAX);
        for (i, fed) in self.federates.iter().enumerate() {
            if i != handle.0 && !fed.done {
                let reach = fed.granted + fed.decl.exchange_interval;
                barrier = barrier.min(reach);
            }
        }
        barrier
    }

    /// Grants the initial time t=0 with any messages already deliverable.
    pub fn initial_grant(&mut self, handle: FederateHandle) -> Result<TimeGrant, CosimError> {
        if !self.started {
            return Err(CosimError::NotStarted);
        }
        let fed = &mut self.federates[handle.0];
        if fed.initialized || fed.granted != SimTime::ZERO {
            return Err(CosimError::NonMonotoneRequest {
                federate: fed.decl.name.clone(),
                requested: SimTime::ZERO,
                granted: fed.granted,
            });
        }
        fed.initialized = true;
        Ok(self.deliver_grant(handle.0, SimTime::ZERO))
    }

    /// Requests advancement to `requested`. The granted time is
    /// `min(requested, barrier)`; when no progress past the current granted
    /// time is possible yet, the grant repeats the current time with no
    /// inputs and the caller must let peers advance first.
    pub fn request_time(
        &mut self,
        handle: FederateHandle,
        requested: SimTime,
    ) -> Result<TimeGrant, CosimError> {
        if !self.started {
            return Err(CosimError::NotStarted);
        }
        let current = self.federates[handle.0].granted;
        if requested <= current {
            return Err(CosimError::NonMonotoneRequest {
                federate: self.federates[handle.0].decl.name.clone(),
                requested,
                granted: current,
            });
        }
        let granted = requested.min(self.barrier(handle));
        if granted <= current {
            return Ok(TimeGrant {
                federate: self.federates[handle.0].decl.name.clone(),
                granted_time: current,
                inputs: Vec::new(),
            });
        }
        self.federates[handle.0].initialized = true;
        Ok(self.deliver_grant(handle.0, granted))
    }

    fn deliver_grant(&mut self, index: usize, granted: SimTime) -> TimeGrant {
        let inclusive = self.config.inclusive_delivery;
        let fed = &mut self.federates[index];
        fed.granted = granted;
        let due = |m: &QueuedMessage| {
            if inclusive {
                m.message.deliver_time <= granted
            } else {
                m.message.deliver_time < granted
            }
        };
        let mut delivered: Vec<QueuedMessage> = Vec::new();
        let mut kept: Vec<QueuedMessage> = Vec::new();
        for q in fed.mailbox.drain(..) {
            if due(&q) {
                delivered.push(q);
            } else {
                kept.push(q);
            }
        }
        fed.mailbox = kept;
        delivered.sort_by(|a, b| {
            (a.message.deliver_time, &a.message.topic, a.seq).cmp(&(
                b.message.deliver_time,
                &b.message.topic,
                b.seq,
            ))
        });
        let name = fed.decl.name.clone();
        self.log.push(LogEntry::Grant {
            federate: name.clone(),
            time: granted,
            inputs: delivered.len(),
        });
        for q in &delivered {
            self.log.push(LogEntry::Deliver {
                federate: name.clone(),
                topic: q.message.topic.clone(),
                deliver_time: q.message.deliver_time,
                granted_time: granted,
            });
        }
        TimeGrant {
            federate: name,
            granted_time: granted,
            inputs: delivered.into_iter().map(|q| q.message).collect(),
        }
    }

    /// Publishes `value` on `topic` at the federate's current granted time.
    pub fn publish(
        &mut self,
        handle: FederateHandle,
        topic: &str,
        value: Value,
        time: SimTime,
    ) -> Result<(), CosimError> {
        if !self.started {
            return Err(CosimError::NotStarted);
        }
        let fed_name = self.federates[handle.0].decl.name.clone();
        let topic_state = match self.topics.get_mut(topic) {
            Some(t) if t.publisher == handle.0 => t,
            _ => {
                return Err(CosimError::UnknownTopic {
                    federate: fed_name,
                    topic: topic.to_string(),
                })
            }
        };
        let granted = self.federates[handle.0].granted;
        if time != granted {
            return Err(CosimError::TimeMismatch {
                federate: fed_name,
                publish_time: time,
                granted,
            });
        }
        match topic_state.kind {
            None => topic_state.kind = Some(value.kind()),
            Some(kind) if kind != value.kind() => {
                return Err(CosimError::PayloadTypeMismatch {
                    topic: topic.to_string(),
                    expected: kind,
                    got: value.kind(),
                });
            }
            Some(_) => {}
        }
        let link = self
            .config
            .links
            .get(topic)
            .copied()
            .unwrap_or_default();
        let deliver_time = time + link.latency;
        let dropped = link.drop_probability > 0.0
            && self.rng.gen_range(0.0..1.0) < link.drop_probability;
        self.log.push(LogEntry::Publish {
            federate: fed_name,
            topic: topic.to_string(),
            time,
            deliver_time,
            value,
            dropped,
        });
        if !dropped {
            let subscribers = self.topics[topic].subscribers.clone();
            for sub in subscribers {
                self.seq += 1;
                self.federates[sub].mailbox.push(QueuedMessage {
                    message: Message {
                        topic: topic.to_string(),
                        value,
                        publish_time: time,
                        deliver_time,
                    },
                    seq: self.seq,
                });
            }
        }
        Ok(())
    }

    pub fn log(&self) -> &FederationLog {
        &self.log
    }

    pub fn into_log(self) -> FederationLog {
        self.log
    }
}

/// A simulator participating in a federation run.
pub trait Federate {
    fn declaration(&self) -> FederateDecl;

    /// Called at every granted time, including t=0, with the delivered
    /// inputs. Returns the next requested time; a request beyond the stop
    /// time finishes the federate. An error aborts the federation run.
    fn on_grant(
        &mut self,
        ctx: &mut PublishContext<'_>,
        grant: &TimeGrant,
    ) -> Result<SimTime, CosimError>;
}

/// Publishing capability scoped to the federate currently holding a grant.
pub struct PublishContext<'a> {
    broker: &'a mut Broker,
    handle: FederateHandle,
}

impl PublishContext<'_> {
    /// Publishes at the current granted time.
    pub fn publish(&mut self, topic: &str, value: Value) -> Result<(), CosimError> {
        let time = self.broker.granted_time(self.handle);
        self.broker.publish(self.handle, topic, value, time)
    }
}

/// Runs a federation of callback federates until every one has reached
/// `stop_time`. Grants proceed globally earliest first; ties are broken by
/// registration order. Two runs with identical federates and configuration
/// produce identical logs.
pub fn run_federation(
    config: FederationConfig,
    mut federates: Vec<&mut dyn Federate>,
    stop_time: SimTime,
) -> Result<FederationLog, CosimError> {
    let mut broker = Broker::new(config);
    let mut handles = Vec::with_capacity(federates.len());
    for fed in &federates {
        handles.push(broker.register_federate(fed.declaration())?);
    }
    broker.start()?;

    let n = federates.len();
    let mut pending = vec![SimTime::ZERO; n];
    for i in 0..n {
        let grant = broker.initial_grant(handles[i])?;
        let mut ctx = PublishContext {
            broker: &mut broker,
            handle: handles[i],
        };
        let next = federates[i].on_grant(&mut ctx, &grant)?;
        if next <= SimTime::ZERO {
            return Err(CosimError::NonMonotoneRequest {
                federate: grant.federate.clone(),
                requested: next,
                granted: SimTime::ZERO,
            });
        }
        pending[i] = next;
        if next > stop_time {
            broker.set_done(handles[i]);
        }
    }

    loop {
        let mut chosen: Option<usize> = None;
        let mut any_active = false;
        for i in 0..n {
            if pending[i] > stop_time {
                continue;
            }
            any_active = true;
            if pending[i] <= broker.barrier(handles[i]) {
                let better = match chosen {
                    None => true,
                    Some(c) => pending[i] < pending[c],
                };
                if better {
                    chosen = Some(i);
                }
            }
        }
        if !any_active {
            break;
        }
        let Some(i) = chosen else {
            let mut diagnostic = String::new();
            for j in 0..n {
                if pending[j] <= stop_time {
                    diagnostic.push_str(&format!(
                        "  {}: granted {}, requested {}, barrier {}\n",
                        federates[j].declaration().name,
                        broker.granted_time(handles[j]),
                        pending[j],
                        broker.barrier(handles[j]),
                    ));
                }
            }
            return Err(CosimError::Deadlock { diagnostic });
        };
        let grant = broker.request_time(handles[i], pending[i])?;
        debug_assert_eq!(grant.granted_time, pending[i], "scheduler grants in full");
        let mut ctx = PublishContext {
            broker: &mut broker,
            handle: handles[i],
        };
        let next = federates[i].on_grant(&mut ctx, &grant)?;
        if next <= grant.granted_time {
            return Err(CosimError::NonMonotoneRequest {
                federate: grant.federate.clone(),
                requested: next,
                granted: grant.granted_time,
            });
        }
        pending[i] = next;
        if next > stop_time {
            broker.set_done(handles[i]);
        }
    }

    Ok(broker.into_log())
}
