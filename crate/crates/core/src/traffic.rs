//! Traffic generation and stream selection.
//!
//! Periodic sources emit fixed-size messages; each message gets a stream of its own
//! until the client's one-byte application acknowledgment for it comes back, so a
//! loss on one message never blocks another.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::engine::Micros;
use crate::transport::{MessageId, StreamId};

/// Stream id of the greedy background stream.
pub const BACKGROUND_STREAM: StreamId = 0;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DataSourceConfig {
    pub source_id: usize,
    pub inter_arrival: Micros,
    pub message_size: u64,
    pub priority: bool,
    pub start_offset: Micros,
}

impl DataSourceConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.inter_arrival == 0 {
            return Err(format!(
                "source {}: inter_arrival must be > 0",
                self.source_id
            ));
        }
        if self.message_size == 0 {
            return Err(format!(
                "source {}: message_size must be > 0",
                self.source_id
            ));
        }
        Ok(())
    }

    /// Generation instants before `horizon`.
    pub fn tick_times(&self, horizon: Micros) -> impl Iterator<Item = Micros> + '_ {
        (0..)
            .map(move |k| self.start_offset + k * self.inter_arrival)
            .take_while(move |&t| t < horizon)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MessageRecord {
    pub message_id: MessageId,
    pub source_id: usize,
    pub generated_at: Micros,
    pub size: u64,
    pub priority: bool,
    pub stream_id: StreamId,
    pub completed_at: Option<Micros>,
    /// Path of the packet that completed the message, and whether that packet was a
    /// redundant copy.
    pub completed_via: Option<(usize, bool)>,
    pub loss_involved: bool,
    pub duplicated: bool,
    pub app_acked_at: Option<Micros>,
}

impl MessageRecord {
    pub fn mct(&self) -> Option<Micros> {
        self.completed_at.map(|c| c - self.generated_at)
    }
}

/// Stream ids by class: busy streams carry exactly one message.
#[derive(Clone, Debug)]
pub struct StreamPool {
    free: [BTreeSet<StreamId>; 2],
    busy: BTreeMap<StreamId, MessageId>,
    class: BTreeMap<StreamId, bool>,
    next_fresh: StreamId,
}

impl Default for StreamPool {
    fn default() -> Self {
        Self::new()
    }
}

impl StreamPool {
    pub fn new() -> Self {
        Self {
            free: [BTreeSet::new(), BTreeSet::new()],
            busy: BTreeMap::new(),
            class: BTreeMap::new(),
            next_fresh: BACKGROUND_STREAM + 1,
        }
    }

    /// Lowest free stream of the message's class, or a fresh one.
    pub fn select_stream(&mut self, priority: bool, message: MessageId) -> StreamId {
        let id = match self.free[priority as usize].pop_first() {
            Some(id) => id,
            None => {
                let id = self.next_fresh;
                self.next_fresh += 1;
                self.class.insert(id, priority);
                id
            }
        };
        self.busy.insert(id, message);
        id
    }

    /// Return a stream after its message's application ack arrived. Returns `false`
    /// if the stream was not carrying `message`.
    pub fn release(&mut self, stream: StreamId, message: MessageId) -> bool {
        if self.busy.get(&stream) != Some(&message) {
            return false;
        }
        self.busy.remove(&stream);
        let priority = self.class[&stream];
        self.free[priority as usize].insert(stream);
        true
    }

    pub fn is_busy(&self, stream: StreamId) -> bool {
        self.busy.contains_key(&stream)
    }

    pub fn opened(&self) -> u64 {
        self.next_fresh - 1
    }
}

/// Generator state: sources, stream pool and every message generated so far.
#[derive(Clone, Debug)]
pub struct Traffic {
    pub sources: Vec<DataSourceConfig>,
    pub messages: Vec<MessageRecord>,
    pub pool: StreamPool,
}

impl Traffic {
    pub fn new(sources: Vec<DataSourceConfig>) -> Self {
        Self {
            sources,
            messages: Vec::new(),
            pool: StreamPool::new(),
        }
    }

    /// Generate the source's message for instant `t` and assign it a stream.
    pub fn tick_source(&mut self, source: usize, t: Micros) -> &MessageRecord {
        let src = &self.sources[source];
        let id = self.messages.len() as MessageId;
        let stream_id = self.pool.select_stream(src.priority, id);
        self.messages.push(MessageRecord {
            message_id: id,
            source_id: src.source_id,
            generated_at: t,
            size: src.message_size,
            priority: src.priority,
            stream_id,
            completed_at: None,
            completed_via: None,
            loss_involved: false,
            duplicated: false,
            app_acked_at: None,
        });
        &self.messages[id as usize]
    }

    pub fn message(&self, id: MessageId) -> &MessageRecord {
        &self.messages[id as usize]
    }

    pub fn message_mut(&mut self, id: MessageId) -> &mut MessageRecord {
        &mut self.messages[id as usize]
    }

    /// Client side: the message is fully received. Returns `false` if it already was.
    pub fn on_message_complete(
        &mut self,
        id: MessageId,
        t: Micros,
        path_id: usize,
        via_duplicate: bool,
    ) -> bool {
        let m = &mut self.messages[id as usize];
        if m.completed_at.is_some() {
            return false;
        }
        m.completed_at = Some(t);
        m.completed_via = Some((path_id, via_duplicate));
        true
    }

    /// Server side: the application ack for `id` arrived, freeing its stream.
    pub fn on_app_ack(&mut self, id: MessageId, t: Micros) -> bool {
        let (stream, first) = {
            let m = &mut self.messages[id as usize];
            let first = m.app_acked_at.is_none();
            m.app_acked_at.get_or_insert(t);
            (m.stream_id, first)
        };
        first && self.pool.release(stream, id)
    }
}
