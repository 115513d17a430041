//! Receiver-side stream reassembly.

use std::collections::{BTreeMap, HashMap};

use crate::transport::packet::{MessageId, MessageTag, StreamFrame, StreamId};

/// Set of half-open byte ranges, kept merged.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RangeSet {
    ranges: BTreeMap<u64, u64>,
}

impl RangeSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Insert `[start, end)`, returning how many bytes were not already present.
    pub fn insert(&mut self, start: u64, end: u64) -> u64 {
        if start >= end {
            return 0;
        }
        let first = self
            .ranges
            .range(..=start)
            .next_back()
            .filter(|(_, &e)| e >= start)
            .map_or(start, |(&s, _)| s);
        let touching: Vec<(u64, u64)> = self
            .ranges
            .range(first..=end)
            .map(|(&s, &e)| (s, e))
            .collect();
        let (mut merged_start, mut merged_end, mut overlap) = (start, end, 0);
        for (s, e) in touching {
            self.ranges.remove(&s);
            overlap += e.min(end).saturating_sub(s.max(start));
            merged_start = merged_start.min(s);
            merged_end = merged_end.max(e);
        }
        self.ranges.insert(merged_start, merged_end);
        (end - start) - overlap
    }

    pub fn contains(&self, start: u64, end: u64) -> bool {
        if start >= end {
            return true;
        }
        self.ranges
            .range(..=start)
            .next_back()
            .is_some_and(|(_, &e)| e >= end)
    }

    pub fn len(&self) -> u64 {
        self.ranges.iter().map(|(s, e)| e - s).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    pub fn range_count(&self) -> usize {
        self.ranges.len()
    }
}

#[derive(Debug)]
struct MessageRx {
    len: u64,
    received: RangeSet,
    complete: bool,
}

#[derive(Debug, Default, PartialEq, Eq)]
pub struct Delivery {
    /// Bytes of this frame not seen before.
    pub new_bytes: u64,
    /// Set when this frame completed its message.
    pub completed: Option<MessageTag>,
}

/// Reassembly state of one receiving endpoint.
#[derive(Debug, Default)]
pub struct ReceiveState {
    messages: HashMap<MessageId, MessageRx>,
    streams: HashMap<StreamId, RangeSet>,
    duplicate_bytes: u64,
}

impl ReceiveState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn duplicate_bytes(&self) -> u64 {
        self.duplicate_bytes
    }

    pub fn is_complete(&self, id: MessageId) -> bool {
        self.messages.get(&id).is_some_and(|m| m.complete)
    }

    /// Place a frame's data. Repeated offsets, e.g. from a redundant copy, add nothing
    /// and never complete a message twice.
    pub fn deliver(&mut self, frame: &StreamFrame) -> Delivery {
        let Some(tag) = frame.message else {
            let set = self.streams.entry(frame.stream_id).or_default();
            let new_bytes = set.insert(frame.offset, frame.end());
            self.duplicate_bytes += frame.len as u64 - new_bytes;
            return Delivery {
                new_bytes,
                completed: None,
            };
        };
        let rx = self.messages.entry(tag.id).or_insert_with(|| MessageRx {
            len: tag.len,
            received: RangeSet::new(),
            complete: false,
        });
        if rx.complete {
            self.duplicate_bytes += frame.len as u64;
            return Delivery::default();
        }
        let new_bytes = rx.received.insert(frame.offset, frame.end());
        self.duplicate_bytes += frame.len as u64 - new_bytes;
        let completed = rx.received.contains(0, rx.len).then(|| {
            rx.complete = true;
            rx.received = RangeSet::new();
            tag
        });
        Delivery {
            new_bytes,
            completed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::packet::packetize;
    use proptest::prelude::*;

    #[test]
    fn range_merging() {
        let mut r = RangeSet::new();
        assert_eq!(r.insert(0, 10), 10);
        assert_eq!(r.insert(20, 30), 10);
        assert_eq!(r.insert(5, 25), 10);
        assert_eq!(r.range_count(), 1);
        assert!(r.contains(0, 30));
        assert_eq!(r.insert(0, 30), 0);
        assert_eq!(r.insert(30, 31), 1);
        assert_eq!(r.len(), 31);
    }

    proptest! {
        #[test]
        fn insert_counts_match_bitmap(ops in prop::collection::vec((0u64..200, 1u64..40), 1..40)) {
            let mut r = RangeSet::new();
            let mut bits = vec![false; 256];
            for (s, l) in ops {
                let e = (s + l).min(256);
                let expect = (s..e).filter(|&i| !bits[i as usize]).count() as u64;
                for i in s..e { bits[i as usize] = true; }
                prop_assert_eq!(r.insert(s, e), expect);
            }
            prop_assert_eq!(r.len(), bits.iter().filter(|b| **b).count() as u64);
        }
    }

    fn frames(id: MessageId, len: u64) -> Vec<StreamFrame> {
        packetize(1, Some(MessageTag { id, len }), 0, len)
    }

    #[test]
    fn completes_on_last_missing_piece() {
        let mut rx = ReceiveState::new();
        let fs = frames(1, 10_000);
        for f in fs.iter().skip(1) {
            assert!(rx.deliver(f).completed.is_none());
        }
        // retransmission fills the gap
        let d = rx.deliver(&fs[0]);
        assert_eq!(d.completed.map(|t| t.id), Some(1));
    }

    #[test]
    fn redundant_copy_is_discarded() {
        let mut rx = ReceiveState::new();
        let fs = frames(7, 1_300);
        assert!(rx.deliver(&fs[0]).completed.is_some());
        let again = rx.deliver(&fs[0]);
        assert_eq!(again, Delivery::default());
        assert_eq!(rx.duplicate_bytes(), 1_300);
    }

    #[test]
    fn background_stream_counts_new_bytes() {
        let mut rx = ReceiveState::new();
        let f = StreamFrame {
            stream_id: 0,
            message: None,
            offset: 0,
            len: 1300,
            fin: false,
        };
        assert_eq!(rx.deliver(&f).new_bytes, 1300);
        assert_eq!(rx.deliver(&f).new_bytes, 0);
    }
}
