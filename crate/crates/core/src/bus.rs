//! In-process partitioned message log with offset-addressed consumers.
//!
//! Each topic owns a fixed set of append-only partitions. Publishing assigns
//! partitions round-robin. Consumers track their own offset map and resume
//! exactly after the last delivered message, so a consumer that always feeds
//! back the returned offsets sees every message once.

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use thiserror::Error;

use crate::rdf::TimedTriple;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BusError {
    #[error("unknown topic {0:?}")]
    UnknownTopic(String),
    #[error("topic {0:?} already exists")]
    TopicExists(String),
    #[error("topic needs at least one partition")]
    NoPartitions,
    #[error("payload is empty")]
    EmptyPayload,
    #[error("payload triple tagged with topic {found:?} published to {expected:?}")]
    TopicMismatch { expected: String, found: String },
    #[error("offset {offset} out of range for partition {partition} (valid {low}..={high})")]
    OffsetOutOfRange { partition: usize, offset: u64, low: u64, high: u64 },
}

pub type Offset = u64;

#[derive(Debug, Clone)]
pub struct Message {
    pub partition: usize,
    pub offset: Offset,
    pub payload: Arc<[TimedTriple]>,
    pub publish_time: u64,
}

#[derive(Debug, Default)]
struct Partition {
    /// Offset of `messages[0]`; earlier messages were released by retention.
    base: Offset,
    messages: Vec<Message>,
}

impl Partition {
    fn next_offset(&self) -> Offset {
        self.base + self.messages.len() as Offset
    }
}

#[derive(Debug)]
pub struct TopicLog {
    name: Arc<str>,
    partitions: Vec<Mutex<Partition>>,
    cursor: AtomicUsize,
}

/// Where a published message landed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Position {
    pub partition: usize,
    pub offset: Offset,
}

impl TopicLog {
    fn new(name: &str, partitions: usize) -> Self {
        TopicLog {
            name: name.into(),
            partitions: (0..partitions).map(|_| Mutex::new(Partition::default())).collect(),
            cursor: AtomicUsize::new(0),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn partition_count(&self) -> usize {
        self.partitions.len()
    }

    pub fn next_offset(&self, partition: usize) -> Offset {
        self.partitions[partition].lock().unwrap().next_offset()
    }

    fn publish(&self, payload: Arc<[TimedTriple]>, publish_time: u64) -> Position {
        let partition = self.cursor.fetch_add(1, Ordering::Relaxed) % self.partitions.len();
        let mut p = self.partitions[partition].lock().unwrap();
        let offset = p.next_offset();
        p.messages.push(Message { partition, offset, payload, publish_time });
        Position { partition, offset }
    }

    /// Drops messages strictly below `offset` in `partition`. Offsets of the
    /// remaining messages are unchanged.
    pub fn release_before(&self, partition: usize, offset: Offset) {
        let mut p = self.partitions[partition].lock().unwrap();
        let upto = offset.min(p.next_offset());
        if upto > p.base {
            let n = (upto - p.base) as usize;
            p.messages.drain(..n);
            p.base = upto;
        }
    }

    pub fn retained_messages(&self) -> usize {
        self.partitions.iter().map(|p| p.lock().unwrap().messages.len()).sum()
    }
}

/// Per-partition resume positions of one consumer.
pub type OffsetMap = BTreeMap<usize, Offset>;

#[derive(Debug, Default)]
pub struct StreamBus {
    topics: RwLock<HashMap<String, Arc<TopicLog>>>,
}

impl StreamBus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn create_topic(&self, name: &str, partitions: usize) -> Result<Arc<TopicLog>, BusError> {
        if partitions == 0 {
            return Err(BusError::NoPartitions);
        }
        let mut topics = self.topics.write().unwrap();
        if topics.contains_key(name) {
            return Err(BusError::TopicExists(name.to_string()));
        }
        let log = Arc::new(TopicLog::new(name, partitions));
        topics.insert(name.to_string(), log.clone());
        Ok(log)
    }

    pub fn topic(&self, name: &str) -> Result<Arc<TopicLog>, BusError> {
        self.topics
            .read()
            .unwrap()
            .get(name)
            .cloned()
            .ok_or_else(|| BusError::UnknownTopic(name.to_string()))
    }

    pub fn topic_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.topics.read().unwrap().keys().cloned().collect();
        names.sort();
        names
    }

    pub fn publish(&self, topic: &str, payload: Vec<TimedTriple>) -> Result<Position, BusError> {
        self.publish_at(topic, payload, 0)
    }

    pub fn publish_at(
        &self,
        topic: &str,
        payload: Vec<TimedTriple>,
        publish_time: u64,
    ) -> Result<Position, BusError> {
        let log = self.topic(topic)?;
        if payload.is_empty() {
            return Err(BusError::EmptyPayload);
        }
        if let Some(bad) = payload.iter().find(|t| t.topic() != topic) {
            return Err(BusError::TopicMismatch {
                expected: topic.to_string(),
                found: bad.topic().to_string(),
            });
        }
        Ok(log.publish(payload.into(), publish_time))
    }

    /// Returns up to `max_messages` messages at or after `from`, taking one
    /// message per partition in turn, plus the offsets to resume from.
    /// Partitions missing from `from` start at their oldest retained offset.
    pub fn poll(
        &self,
        topic: &str,
        from: &OffsetMap,
        max_messages: usize,
    ) -> Result<(Vec<Message>, OffsetMap), BusError> {
        let log = self.topic(topic)?;
        let guards: Vec<_> = log.partitions.iter().map(|p| p.lock().unwrap()).collect();
        let mut next = OffsetMap::new();
        for (i, p) in guards.iter().enumerate() {
            let at = from.get(&i).copied().unwrap_or(p.base);
            if at > p.next_offset() || at < p.base {
                return Err(BusError::OffsetOutOfRange {
                    partition: i,
                    offset: at,
                    low: p.base,
                    high: p.next_offset(),
                });
            }
            next.insert(i, at);
        }

        let mut out = Vec::new();
        loop {
            let mut progressed = false;
            for (i, p) in guards.iter().enumerate() {
                if out.len() >= max_messages {
                    return Ok((out, next));
                }
                let at = next[&i];
                if at < p.next_offset() {
                    out.push(p.messages[(at - p.base) as usize].clone());
                    next.insert(i, at + 1);
                    progressed = true;
                }
            }
            if !progressed {
                return Ok((out, next));
            }
        }
    }
}

/// A consumer owning its offset map.
#[derive(Debug, Clone)]
pub struct Consumer {
    topic: String,
    offsets: OffsetMap,
}

impl Consumer {
    pub fn new(topic: impl Into<String>) -> Self {
        Consumer { topic: topic.into(), offsets: OffsetMap::new() }
    }

    pub fn topic(&self) -> &str {
        &self.topic
    }

    pub fn offsets(&self) -> &OffsetMap {
        &self.offsets
    }

    pub fn poll(&mut self, bus: &StreamBus, max_messages: usize) -> Result<Vec<Message>, BusError> {
        let (messages, next) = bus.poll(&self.topic, &self.offsets, max_messages)?;
        self.offsets = next;
        Ok(messages)
    }

    /// Polls until the topic is drained.
    pub fn poll_all(&mut self, bus: &StreamBus) -> Result<Vec<Message>, BusError> {
        let mut all = Vec::new();
        loop {
            let batch = self.poll(bus, 4096)?;
            if batch.is_empty() {
                return Ok(all);
            }
            all.extend(batch);
        }
    }
}
