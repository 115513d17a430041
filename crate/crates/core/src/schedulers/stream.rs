//! Stream scheduling: which stream the next packet takes its frame from.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::engine::Micros;
use crate::transport::{MessageTag, RangeSet, StreamFrame, StreamId, MAX_PAYLOAD};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum StreamSchedulerKind {
    #[serde(rename = "rr")]
    RoundRobin,
    #[serde(rename = "pfifo")]
    PriorityFifo,
}

impl StreamSchedulerKind {
    pub fn name(self) -> &'static str {
        match self {
            StreamSchedulerKind::RoundRobin => "rr",
            StreamSchedulerKind::PriorityFifo => "pfifo",
        }
    }
}

impl fmt::Display for StreamSchedulerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StreamSchedulerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rr" => Ok(StreamSchedulerKind::RoundRobin),
            "pfifo" => Ok(StreamSchedulerKind::PriorityFifo),
            other => Err(format!("unknown stream scheduler `{other}` (rr|pfifo)")),
        }
    }
}

#[derive(Clone, Debug)]
pub struct RetransmitFrame {
    pub frame: StreamFrame,
    pub enqueued_at: Micros,
    /// Global enqueue order, breaks ties between equal timestamps.
    pub seq: u64,
}

/// The message currently being sent on a stream.
#[derive(Clone, Debug)]
pub struct OutMessage {
    pub tag: MessageTag,
    pub source_id: Option<usize>,
    pub next_offset: u64,
    pub enqueued_at: Micros,
    /// Redundancy decision, taken when the first packet is scheduled.
    pub duplicate: Option<bool>,
    pub acked: RangeSet,
}

impl OutMessage {
    pub fn remaining(&self) -> u64 {
        self.tag.len - self.next_offset
    }
}

#[derive(Clone, Debug)]
pub enum StreamData {
    /// Unbounded greedy data; `next_offset` is the next unsent stream offset.
    Background {
        next_offset: u64,
        acked: RangeSet,
    },
    Messages {
        current: Option<OutMessage>,
    },
}

#[derive(Clone, Debug)]
pub struct SendStream {
    pub id: StreamId,
    pub priority: bool,
    pub data: StreamData,
    pub retransmit: VecDeque<RetransmitFrame>,
}

impl SendStream {
    pub fn background(id: StreamId) -> Self {
        Self {
            id,
            priority: false,
            data: StreamData::Background {
                next_offset: 0,
                acked: RangeSet::new(),
            },
            retransmit: VecDeque::new(),
        }
    }

    pub fn for_messages(id: StreamId, priority: bool) -> Self {
        Self {
            id,
            priority,
            data: StreamData::Messages { current: None },
            retransmit: VecDeque::new(),
        }
    }

    pub fn current(&self) -> Option<&OutMessage> {
        match &self.data {
            StreamData::Messages { current } => current.as_ref(),
            StreamData::Background { .. } => None,
        }
    }

    pub fn current_mut(&mut self) -> Option<&mut OutMessage> {
        match &mut self.data {
            StreamData::Messages { current } => current.as_mut(),
            StreamData::Background { .. } => None,
        }
    }

    /// Enqueue time used for FIFO ordering of fresh data.
    pub fn enqueued_at(&self) -> Micros {
        self.current().map_or(0, |m| m.enqueued_at)
    }

    pub fn has_fresh(&self) -> bool {
        match &self.data {
            StreamData::Background { .. } => true,
            StreamData::Messages { current } => current.as_ref().is_some_and(|m| m.remaining() > 0),
        }
    }

    /// The next fresh frame this stream would send, without consuming it.
    pub fn peek_fresh(&self) -> Option<StreamFrame> {
        match &self.data {
            StreamData::Background { next_offset, .. } => Some(StreamFrame {
                stream_id: self.id,
                message: None,
                offset: *next_offset,
                len: MAX_PAYLOAD,
                fin: false,
            }),
            StreamData::Messages { current } => {
                let m = current.as_ref().filter(|m| m.remaining() > 0)?;
                let len = m.remaining().min(MAX_PAYLOAD as u64);
                Some(StreamFrame {
                    stream_id: self.id,
                    message: Some(m.tag),
                    offset: m.next_offset,
                    len: len as u32,
                    fin: m.next_offset + len == m.tag.len,
                })
            }
        }
    }

    pub fn advance(&mut self, frame: &StreamFrame) {
        match &mut self.data {
            StreamData::Background { next_offset, .. } => *next_offset = frame.end(),
            StreamData::Messages { current } => {
                if let Some(m) = current.as_mut() {
                    m.next_offset = frame.end();
                }
            }
        }
    }

    /// Record that `frame` reached the peer.
    pub fn on_frame_acked(&mut self, frame: &StreamFrame) {
        match &mut self.data {
            StreamData::Background { acked, .. } => {
                acked.insert(frame.offset, frame.end());
            }
            StreamData::Messages { current } => {
                if let Some(m) = current.as_mut().filter(|m| Some(m.tag) == frame.message) {
                    m.acked.insert(frame.offset, frame.end());
                }
            }
        }
    }

    /// A retransmission is pointless once its data was acked through another copy or
    /// its message has been replaced on the stream.
    pub fn is_stale(&self, frame: &StreamFrame) -> bool {
        match &self.data {
            StreamData::Background { acked, .. } => acked.contains(frame.offset, frame.end()),
            StreamData::Messages { current } => match current {
                Some(m) if Some(m.tag) == frame.message => {
                    m.acked.contains(frame.offset, frame.end())
                }
                _ => true,
            },
        }
    }

    pub fn prune_retransmits(&mut self) {
        while let Some(front) = self.retransmit.front() {
            if self.is_stale(&front.frame) {
                self.retransmit.pop_front();
            } else {
                break;
            }
        }
        if !self.retransmit.is_empty() {
            let keep: VecDeque<RetransmitFrame> = std::mem::take(&mut self.retransmit)
                .into_iter()
                .filter(|r| !self.is_stale(&r.frame))
                .collect();
            self.retransmit = keep;
        }
    }
}

/// What a scheduling candidate would send.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CandidateKind {
    Retransmit,
    Fresh,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Candidate {
    pub stream_id: StreamId,
    pub kind: CandidateKind,
}

#[derive(Clone, Debug)]
pub struct StreamScheduler {
    kind: StreamSchedulerKind,
    rr_last: Option<StreamId>,
}

impl StreamScheduler {
    pub fn new(kind: StreamSchedulerKind) -> Self {
        Self {
            kind,
            rr_last: None,
        }
    }

    pub fn kind(&self) -> StreamSchedulerKind {
        self.kind
    }

    /// Candidates in the order they should be offered to the path scheduler.
    pub fn order(&self, streams: &BTreeMap<StreamId, SendStream>) -> Vec<Candidate> {
        match self.kind {
            StreamSchedulerKind::PriorityFifo => pfifo_order(streams),
            StreamSchedulerKind::RoundRobin => rr_order(streams, self.rr_last),
        }
    }

    /// Note that `stream_id` just sent a packet.
    pub fn served(&mut self, stream_id: StreamId) {
        self.rr_last = Some(stream_id);
    }
}

/// Retransmissions first (oldest first), then priority streams, then the rest;
/// FIFO by enqueue time within each class.
pub fn pfifo_order(streams: &BTreeMap<StreamId, SendStream>) -> Vec<Candidate> {
    let mut retx: Vec<(Micros, u64, StreamId)> = streams
        .values()
        .filter_map(|s| s.retransmit.front().map(|r| (r.enqueued_at, r.seq, s.id)))
        .collect();
    retx.sort_unstable();
    let mut fresh: Vec<(bool, Micros, StreamId)> = streams
        .values()
        .filter(|s| s.has_fresh())
        .map(|s| (!s.priority, s.enqueued_at(), s.id))
        .collect();
    fresh.sort_unstable();
    retx.into_iter()
        .map(|(_, _, id)| Candidate {
            stream_id: id,
            kind: CandidateKind::Retransmit,
        })
        .chain(fresh.into_iter().map(|(_, _, id)| Candidate {
            stream_id: id,
            kind: CandidateKind::Fresh,
        }))
        .collect()
}

/// Streams in cyclic id order starting after the last served one, one candidate per
/// stream; a stream's own retransmissions go before its fresh data.
pub fn rr_order(
    streams: &BTreeMap<StreamId, SendStream>,
    last: Option<StreamId>,
) -> Vec<Candidate> {
    let start = last.map_or(0, |l| l + 1);
    streams
        .range(start..)
        .chain(streams.range(..start))
        .filter_map(|(&id, s)| {
            let kind = if !s.retransmit.is_empty() {
                CandidateKind::Retransmit
            } else if s.has_fresh() {
                CandidateKind::Fresh
            } else {
                return None;
            };
            Some(Candidate {
                stream_id: id,
                kind,
            })
        })
        .collect()
}

pub fn rr_next_stream(
    streams: &BTreeMap<StreamId, SendStream>,
    last: Option<StreamId>,
) -> Option<StreamId> {
    rr_order(streams, last).first().map(|c| c.stream_id)
}

pub fn pfifo_next_stream(streams: &BTreeMap<StreamId, SendStream>) -> Option<StreamId> {
    pfifo_order(streams).first().map(|c| c.stream_id)
}
