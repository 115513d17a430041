//! Discrete-event engine: a virtual clock and an ordered, cancellable event queue.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

/// Virtual time in integer microseconds.
pub type Micros = u64;

pub const MICROS_PER_MS: Micros = 1_000;
pub const MICROS_PER_SEC: Micros = 1_000_000;

/// Opaque handle returned by [`EventQueue::schedule`], usable for cancellation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct EventHandle(u64);

struct Entry<E> {
    fire_time: Micros,
    sequence: u64,
    payload: E,
}

impl<E> PartialEq for Entry<E> {
    fn eq(&self, other: &Self) -> bool {
        self.fire_time == other.fire_time && self.sequence == other.sequence
    }
}

impl<E> Eq for Entry<E> {}

impl<E> PartialOrd for Entry<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Entry<E> {
    // BinaryHeap is a max-heap; invert so the earliest (time, sequence) pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .fire_time
            .cmp(&self.fire_time)
            .then_with(|| other.sequence.cmp(&self.sequence))
    }
}

/// Event queue ordered by `(fire_time, sequence)`.
///
/// Events scheduled for the same instant are dispatched in insertion order, so a
/// run is a deterministic function of the order in which handlers schedule events.
pub struct EventQueue<E> {
    now: Micros,
    next_sequence: u64,
    heap: BinaryHeap<Entry<E>>,
    live: HashSet<u64>,
}

impl<E> Default for EventQueue<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> EventQueue<E> {
    pub fn new() -> Self {
        Self {
            now: 0,
            next_sequence: 0,
            heap: BinaryHeap::new(),
            live: HashSet::new(),
        }
    }

    pub fn now(&self) -> Micros {
        self.now
    }

    /// Number of live (not cancelled) events still queued.
    pub fn pending(&self) -> usize {
        self.live.len()
    }

    /// Enqueue `payload` to fire at `fire_time`.
    ///
    /// Panics if `fire_time` lies before the current clock.
    pub fn schedule(&mut self, fire_time: Micros, payload: E) -> EventHandle {
        assert!(
            fire_time >= self.now,
            "event scheduled in the past: fire_time={fire_time} now={}",
            self.now
        );
        let sequence = self.next_sequence;
        self.next_sequence += 1;
        self.live.insert(sequence);
        self.heap.push(Entry {
            fire_time,
            sequence,
            payload,
        });
        EventHandle(sequence)
    }

    /// Cancel a pending event. Cancelling an already-dispatched handle is a no-op.
    pub fn cancel(&mut self, handle: EventHandle) {
        self.live.remove(&handle.0);
    }

    /// Pop the next live event with `fire_time <= t_end`, advancing the clock.
    pub fn pop_until(&mut self, t_end: Micros) -> Option<(Micros, E)> {
        loop {
            let head = self.heap.peek()?;
            if head.fire_time > t_end {
                return None;
            }
            let entry = self.heap.pop().expect("peeked entry");
            if !self.live.remove(&entry.sequence) {
                continue;
            }
            self.now = entry.fire_time;
            return Some((entry.fire_time, entry.payload));
        }
    }

    /// Dispatch every event with `fire_time <= t_end` through `handler`.
    ///
    /// Returns the number of dispatched events. Afterwards the clock equals `t_end`
    /// if events remain queued beyond it, otherwise the time of the last dispatched
    /// event.
    pub fn run_until<F>(&mut self, t_end: Micros, mut handler: F) -> u64
    where
        F: FnMut(&mut Self, Micros, E),
    {
        let mut dispatched = 0;
        while let Some((t, event)) = self.pop_until(t_end) {
            handler(self, t, event);
            dispatched += 1;
        }
        if self.pending() > 0 && self.now < t_end {
            self.now = t_end;
        }
        dispatched
    }
}
