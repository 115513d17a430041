//! One side of the multipath connection: per-path congestion state, send streams,
//! the reservation ledger and the reassembly buffer.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::engine::Micros;
use crate::error::SimError;
use crate::net_path::Direction;
use crate::schedulers::{
    cwr_select, cwred_select, decide_duplication, lowrtt_select, reservation_at_risk,
    retransmit_select, CandidateKind, OutMessage, PathChoice, PathSchedulerKind, ReservationBook,
    RetransmitFrame, SendStream, StreamData, StreamScheduler, StreamSchedulerKind,
};
use crate::transport::{
    wire_bytes, CcParams, Delivery, MessageId, MessageTag, Packet, PathState, RangeSet,
    ReceiveState, SentPacket, StreamFrame, StreamId,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Server,
    Client,
}

impl Side {
    pub fn index(self) -> usize {
        match self {
            Side::Server => 0,
            Side::Client => 1,
        }
    }

    pub fn send_direction(self) -> Direction {
        match self {
            Side::Server => Direction::Forward,
            Side::Client => Direction::Reverse,
        }
    }
}

/// One packet handed to a path, as seen by the sender.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SendRecord {
    pub time: Micros,
    pub side: Side,
    pub path_id: usize,
    pub packet_number: u64,
    pub stream_id: StreamId,
    pub message_id: Option<MessageId>,
    pub offset: u64,
    pub len: u32,
    pub size: u32,
    pub priority: bool,
    pub retransmission: bool,
    pub duplicated: bool,
    /// A fresh priority packet under CWR+RED that was not copied to every path.
    pub refrained: bool,
    /// For fresh background packets: whether some priority stream had a fresh frame
    /// that would have fit in this path's free window at that instant.
    pub priority_admissible: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct EndpointDiagnostics {
    /// Priority messages sent without redundancy under CWR+RED.
    pub refrains: u64,
    /// Send attempts that ended with a priority packet waiting for window space.
    pub blocked: u64,
    pub retransmissions: Vec<u64>,
}

/// A lost packet as reported to the simulation.
#[derive(Clone, Debug, PartialEq)]
pub struct LossReport {
    pub path_id: usize,
    pub message: Option<MessageId>,
}

struct PacketPlan {
    stream_id: StreamId,
    frame: StreamFrame,
    priority: bool,
    retransmission: bool,
    duplicate: Option<bool>,
}

pub struct Endpoint {
    side: Side,
    paths: Vec<PathState>,
    streams: BTreeMap<StreamId, SendStream>,
    scheduler: StreamScheduler,
    path_kind: PathSchedulerKind,
    book: ReservationBook,
    rx: ReceiveState,
    retransmit_seq: u64,
    diagnostics: EndpointDiagnostics,
    trace: Option<Vec<SendRecord>>,
}

impl Endpoint {
    pub fn new(
        side: Side,
        paths: Vec<(CcParams, Micros)>,
        stream_kind: StreamSchedulerKind,
        path_kind: PathSchedulerKind,
    ) -> Self {
        let n = paths.len();
        let paths = paths
            .into_iter()
            .enumerate()
            .map(|(i, (params, rtt))| PathState::new(i, params, rtt))
            .collect();
        Self {
            side,
            paths,
            streams: BTreeMap::new(),
            scheduler: StreamScheduler::new(stream_kind),
            path_kind,
            book: ReservationBook::new(n),
            rx: ReceiveState::new(),
            retransmit_seq: 0,
            diagnostics: EndpointDiagnostics {
                retransmissions: vec![0; n],
                ..Default::default()
            },
            trace: None,
        }
    }

    pub fn enable_trace(&mut self) {
        self.trace = Some(Vec::new());
    }

    pub fn take_trace(&mut self) -> Vec<SendRecord> {
        self.trace.take().unwrap_or_default()
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn paths(&self) -> &[PathState] {
        &self.paths
    }

    pub fn path_mut(&mut self, i: usize) -> &mut PathState {
        &mut self.paths[i]
    }

    pub fn book(&self) -> &ReservationBook {
        &self.book
    }

    pub fn book_mut(&mut self) -> &mut ReservationBook {
        &mut self.book
    }

    /// Split borrow for reservation registration.
    pub fn paths_and_book(&mut self) -> (&[PathState], &mut ReservationBook) {
        (&self.paths, &mut self.book)
    }

    pub fn diagnostics(&self) -> &EndpointDiagnostics {
        &self.diagnostics
    }

    pub fn receive_state(&self) -> &ReceiveState {
        &self.rx
    }

    pub fn stream(&self, id: StreamId) -> Option<&SendStream> {
        self.streams.get(&id)
    }

    pub fn add_background_stream(&mut self, id: StreamId) {
        self.streams.insert(id, SendStream::background(id));
    }

    /// Put a new message on `stream_id`, replacing whatever it carried before.
    pub fn enqueue_message(
        &mut self,
        stream_id: StreamId,
        priority: bool,
        tag: MessageTag,
        source_id: Option<usize>,
        now: Micros,
    ) {
        let s = self
            .streams
            .entry(stream_id)
            .or_insert_with(|| SendStream::for_messages(stream_id, priority));
        s.priority = priority;
        s.data = StreamData::Messages {
            current: Some(OutMessage {
                tag,
                source_id,
                next_offset: 0,
                enqueued_at: now,
                duplicate: None,
                acked: RangeSet::new(),
            }),
        };
        s.prune_retransmits();
    }

    pub fn deliver(&mut self, frame: &StreamFrame) -> Delivery {
        self.rx.deliver(frame)
    }

    fn plan(&mut self, stream_id: StreamId, kind: CandidateKind) -> Option<PacketPlan> {
        let s = self.streams.get_mut(&stream_id)?;
        match kind {
            CandidateKind::Retransmit => {
                s.prune_retransmits();
                let r = s.retransmit.front()?;
                Some(PacketPlan {
                    stream_id,
                    frame: r.frame,
                    priority: s.priority,
                    retransmission: true,
                    duplicate: None,
                })
            }
            CandidateKind::Fresh => {
                let frame = s.peek_fresh()?;
                let duplicate = s.current().and_then(|m| m.duplicate);
                Some(PacketPlan {
                    stream_id,
                    frame,
                    priority: s.priority,
                    retransmission: false,
                    duplicate,
                })
            }
        }
    }

    fn choose(&self, plan: &mut PacketPlan, now: Micros) -> PathChoice {
        let size = plan.frame.packet_size();
        if plan.retransmission && plan.priority {
            let skip: Vec<usize> = self
                .paths
                .iter()
                .filter(|p| p.in_flight().any(|sp| sp.frame == Some(plan.frame)))
                .map(|p| p.path_id)
                .collect();
            if !skip.is_empty() {
                return retransmit_select(&self.paths, size, &skip);
            }
        }
        match self.path_kind {
            PathSchedulerKind::LowRtt => lowrtt_select(&self.paths, size),
            PathSchedulerKind::Cwr => cwr_select(&self.paths, &self.book, size, plan.priority, now),
            PathSchedulerKind::CwrRed => {
                let copy = if plan.priority && !plan.retransmission {
                    *plan.duplicate.get_or_insert_with(|| {
                        let remaining = self
                            .streams
                            .get(&plan.stream_id)
                            .and_then(|s| s.current())
                            .map_or(0, |m| m.remaining());
                        decide_duplication(&self.paths, wire_bytes(remaining))
                    })
                } else {
                    false
                };
                cwred_select(&self.paths, &self.book, size, plan.priority, copy, now)
            }
        }
    }

    /// Whether some priority stream has a fresh frame that fits `path`'s free window.
    fn priority_fits(&self, path: usize) -> bool {
        let free = self.paths[path].free_cwnd();
        self.streams.values().any(|s| {
            s.priority
                && s.peek_fresh()
                    .is_some_and(|f| f.packet_size() as u64 <= free)
        })
    }

    /// Send as much as the schedulers admit right now.
    pub fn pump(&mut self, now: Micros) -> Result<Vec<Packet>, SimError> {
        let mut out = Vec::new();
        loop {
            let candidates = self.scheduler.order(&self.streams);
            let mut sent = false;
            let mut priority_blocked = false;
            for c in candidates {
                let Some(mut plan) = self.plan(c.stream_id, c.kind) else {
                    continue;
                };
                match self.choose(&mut plan, now) {
                    PathChoice::Blocked => priority_blocked |= plan.priority,
                    choice => {
                        self.commit(plan, choice, now, &mut out)?;
                        sent = true;
                        break;
                    }
                }
            }
            if !sent {
                if priority_blocked {
                    self.diagnostics.blocked += 1;
                }
                return Ok(out);
            }
        }
    }

    fn commit(
        &mut self,
        plan: PacketPlan,
        choice: PathChoice,
        now: Micros,
        out: &mut Vec<Packet>,
    ) -> Result<(), SimError> {
        let targets = match choice {
            PathChoice::Single(p) => vec![p],
            PathChoice::Duplicate(ps) => ps,
            PathChoice::Blocked => unreachable!("blocked choice committed"),
        };
        let duplicated = targets.len() > 1;
        let fresh_priority = plan.priority && !plan.retransmission;
        let refrained =
            fresh_priority && self.path_kind == PathSchedulerKind::CwrRed && !duplicated;
        let fresh_background = !plan.priority && !plan.retransmission;
        let priority_admissible: Vec<bool> = if self.trace.is_some() && fresh_background {
            targets.iter().map(|&p| self.priority_fits(p)).collect()
        } else {
            vec![false; targets.len()]
        };

        let stream = self
            .streams
            .get_mut(&plan.stream_id)
            .expect("planned stream exists");
        if plan.retransmission {
            stream.retransmit.pop_front();
        } else {
            stream.advance(&plan.frame);
            if let Some(m) = stream.current_mut() {
                if m.duplicate.is_none() && fresh_priority {
                    m.duplicate = Some(plan.duplicate.unwrap_or(false));
                    if self.path_kind == PathSchedulerKind::CwrRed && !duplicated {
                        self.diagnostics.refrains += 1;
                    }
                }
            }
        }
        self.scheduler.served(plan.stream_id);

        let size = plan.frame.packet_size();
        for (&p, admissible) in targets.iter().zip(priority_admissible) {
            let path = &mut self.paths[p];
            let packet_number = path.alloc_packet_number();
            let loss_deadline = path.loss_deadline(now);
            path.on_packet_sent(SentPacket {
                packet_number,
                size,
                sent_time: now,
                loss_deadline,
                frame: Some(plan.frame),
                priority: plan.priority,
                retransmission: plan.retransmission,
                duplicated,
            })
            .map_err(|e| SimError::invariant(now, e))?;
            if self.path_kind.reserves() {
                if plan.priority {
                    self.book.consume(p, size as u64);
                } else {
                    let path = &self.paths[p];
                    if path.free_cwnd() < self.book.active_reserved(p)
                        || reservation_at_risk(path, &self.book, 0, now)
                    {
                        return Err(SimError::invariant(
                            now,
                            format!("background send on path {p} endangers a reservation"),
                        ));
                    }
                }
            }
            out.push(Packet {
                packet_number,
                path_id: p,
                frame: Some(plan.frame),
                ack: None,
                size,
                sent_time: now,
                priority: plan.priority,
                retransmission: plan.retransmission,
                duplicated,
            });
            if let Some(trace) = self.trace.as_mut() {
                trace.push(SendRecord {
                    time: now,
                    side: self.side,
                    path_id: p,
                    packet_number,
                    stream_id: plan.stream_id,
                    message_id: plan.frame.message.map(|m| m.id),
                    offset: plan.frame.offset,
                    len: plan.frame.len,
                    size,
                    priority: plan.priority,
                    retransmission: plan.retransmission,
                    duplicated,
                    refrained,
                    priority_admissible: admissible,
                });
            }
        }
        Ok(())
    }

    fn handle_lost(&mut self, path_id: usize, lost: SentPacket, now: Micros) -> LossReport {
        let p = &self.paths[path_id];
        self.book.drop_near(path_id, now + p.srtt(), p.cwnd());
        let message = lost.frame.and_then(|f| f.message.map(|m| m.id));
        if let Some(frame) = lost.frame {
            if let Some(s) = self.streams.get_mut(&frame.stream_id) {
                if !s.is_stale(&frame) {
                    s.retransmit.push_back(RetransmitFrame {
                        frame,
                        enqueued_at: now,
                        seq: self.retransmit_seq,
                    });
                    self.retransmit_seq += 1;
                    self.diagnostics.retransmissions[path_id] += 1;
                }
            }
        }
        LossReport { path_id, message }
    }

    /// Process an ack for `pn` on `path_id`; returns packets found lost by the gap rule.
    pub fn on_ack(&mut self, path_id: usize, pn: u64, now: Micros) -> Vec<LossReport> {
        let outcome = self.paths[path_id].on_ack(pn, now);
        if let Some(frame) = outcome.acked.as_ref().and_then(|p| p.frame) {
            if let Some(s) = self.streams.get_mut(&frame.stream_id) {
                s.on_frame_acked(&frame);
            }
        }
        outcome
            .lost
            .into_iter()
            .map(|p| self.handle_lost(path_id, p, now))
            .collect()
    }

    pub fn on_alarm(&mut self, path_id: usize, now: Micros) -> Vec<LossReport> {
        let lost = self.paths[path_id].on_alarm(now);
        lost.into_iter()
            .map(|p| self.handle_lost(path_id, p, now))
            .collect()
    }

    pub fn check_invariants(&self, now: Micros) -> Result<(), SimError> {
        for p in &self.paths {
            p.check_conservation()
                .map_err(|e| SimError::invariant(now, e))?;
            let reserved = self.book.active_reserved(p.path_id);
            if reserved > p.cwnd() {
                return Err(SimError::invariant(
                    now,
                    format!(
                        "path {}: {} B reserved exceeds cwnd {}",
                        p.path_id,
                        reserved,
                        p.cwnd()
                    ),
                ));
            }
        }
        Ok(())
    }
}
