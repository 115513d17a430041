//! Event loop wiring the server and client endpoints to the emulated paths.
//!
//! The server sends priority messages and greedy background data on the forward
//! direction; the client acks every data packet on the path it arrived on and answers
//! each completed message with a one-byte application ack on its own stream.

use serde::Serialize;

use crate::config::{ForcedDrop, ScenarioConfig};
use crate::connection::{Endpoint, LossReport, SendRecord, Side};
use crate::engine::{EventHandle, EventQueue, Micros};
use crate::error::{MetricsError, SimError};
use crate::metrics::{
    cwnd_growth_ca, mct_samples, throughput_series, CwndGrowthRecord, DeliveredPacket, MctSample,
    ThroughputBin,
};
use crate::net_path::{Direction, NetPath, PacketClass};
use crate::schedulers::{register_reservation, ReservationDiagnostics};
use crate::traffic::{MessageRecord, Traffic, BACKGROUND_STREAM};
use crate::transport::{CcParams, CwndHistory, MessageTag, Packet, MAX_PAYLOAD};

pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Without strict checking, full ledger audits run this often (in events) and once
/// at the end of the run.
const AUDIT_INTERVAL: u64 = 4096;

#[derive(Clone, Debug)]
pub enum Event {
    Arrival {
        path: usize,
        dir: Direction,
        packet: Packet,
    },
    SourceTick {
        source: usize,
    },
    LossAlarm {
        side: Side,
        path: usize,
    },
}

#[derive(Clone, Copy, Debug, Default)]
pub struct SimOptions {
    /// Audit every invariant after every event.
    pub strict: bool,
    /// Keep a per-packet send log.
    pub trace: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PathSummary {
    pub path_id: usize,
    pub packets_sent: u64,
    pub packets_lost: u64,
    pub link_drops: u64,
    pub retransmissions: u64,
    pub decreases: u64,
    pub mean_srtt_us: Option<f64>,
    pub final_cwnd: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub engine_version: String,
    pub seed: u64,
    pub paths: Vec<PathSummary>,
    pub refrains: u64,
    pub blocked: u64,
    pub reservations: ReservationDiagnostics,
    pub messages_generated: u64,
    pub messages_completed: u64,
    pub transport_bytes: u64,
    pub goodput_bytes: u64,
    pub dispatched_events: u64,
    pub dispatch_digest: String,
    pub growth_diagnostics: Vec<String>,
}

/// Everything a finished run produced.
pub struct RunOutput {
    pub config: ScenarioConfig,
    pub messages: Vec<MessageRecord>,
    pub mct: Vec<MctSample>,
    pub throughput: Vec<ThroughputBin>,
    pub growth: Vec<Result<CwndGrowthRecord, MetricsError>>,
    pub histories: Vec<CwndHistory>,
    pub send_log: Vec<SendRecord>,
    pub summary: RunSummary,
}

impl RunOutput {
    pub fn priority_mcts(&self) -> Vec<Micros> {
        self.mct.iter().map(|m| m.mct).collect()
    }
}

/// FNV-1a, folded over every dispatched event.
struct Digest(u64);

impl Digest {
    fn new() -> Self {
        Digest(0xcbf2_9ce4_8422_2325)
    }

    fn feed(&mut self, v: u64) {
        for b in v.to_le_bytes() {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
}

pub struct Simulation {
    cfg: ScenarioConfig,
    options: SimOptions,
    queue: EventQueue<Event>,
    net: Vec<NetPath>,
    server: Endpoint,
    client: Endpoint,
    traffic: Traffic,
    alarms: [Vec<Option<(Micros, EventHandle)>>; 2],
    deliveries: Vec<DeliveredPacket>,
    goodput: u64,
    dispatched: u64,
    digest: Digest,
}

fn endpoint(side: Side, cfg: &ScenarioConfig, options: SimOptions) -> Endpoint {
    let paths = cfg
        .paths
        .iter()
        .map(|p| {
            let params = CcParams {
                max_cwnd: p.effective_max_cwnd(),
                ..CcParams::default()
            };
            (params, p.rtt_nominal())
        })
        .collect();
    let mut e = Endpoint::new(side, paths, cfg.stream_scheduler, cfg.path_scheduler);
    if options.trace {
        e.enable_trace();
    }
    e
}

impl Simulation {
    pub fn new(cfg: ScenarioConfig, options: SimOptions) -> Result<Self, SimError> {
        cfg.validate()
            .map_err(|e| SimError::InvalidScenario(e.to_string()))?;
        let net = cfg
            .paths
            .iter()
            .map(|p| NetPath::new(p.clone(), cfg.seed))
            .collect();
        let mut server = endpoint(Side::Server, &cfg, options);
        for i in 0..cfg.paths.len() {
            server.path_mut(i).record_history();
        }
        if cfg.background {
            server.add_background_stream(BACKGROUND_STREAM);
        }
        let client = endpoint(Side::Client, &cfg, options);
        let n = cfg.paths.len();
        Ok(Self {
            traffic: Traffic::new(cfg.sources.clone()),
            cfg,
            options,
            queue: EventQueue::new(),
            net,
            server,
            client,
            alarms: [vec![None; n], vec![None; n]],
            deliveries: Vec::new(),
            goodput: 0,
            dispatched: 0,
            digest: Digest::new(),
        })
    }

    /// Run a scenario to its horizon.
    pub fn run_scenario(cfg: &ScenarioConfig, options: SimOptions) -> Result<RunOutput, SimError> {
        Simulation::new(cfg.clone(), options)?.run()
    }

    fn endpoint_mut(&mut self, side: Side) -> &mut Endpoint {
        match side {
            Side::Server => &mut self.server,
            Side::Client => &mut self.client,
        }
    }

    pub fn run(mut self) -> Result<RunOutput, SimError> {
        let horizon = self.cfg.duration;
        for (i, s) in self.cfg.sources.clone().iter().enumerate() {
            if s.start_offset < horizon {
                self.queue
                    .schedule(s.start_offset, Event::SourceTick { source: i });
                if s.priority {
                    let (paths, book) = self.server.paths_and_book();
                    register_reservation(
                        self.cfg.path_scheduler,
                        paths,
                        book,
                        s.source_id,
                        s.message_size,
                        s.start_offset,
                    );
                }
            }
        }
        self.pump(Side::Server, 0)?;
        self.sync_alarms();

        while let Some((now, ev)) = self.queue.pop_until(horizon) {
            self.dispatched += 1;
            self.digest.feed(now);
            match ev {
                Event::Arrival { path, dir, packet } => {
                    self.digest.feed(((path as u64) << 1) | dir.index() as u64);
                    self.digest.feed(packet.packet_number);
                    self.on_arrival(now, path, dir, packet)?;
                }
                Event::SourceTick { source } => {
                    self.digest.feed(1 << 32 | source as u64);
                    self.on_tick(now, source)?;
                }
                Event::LossAlarm { side, path } => {
                    self.digest
                        .feed(2 << 32 | (side.index() as u64) << 8 | path as u64);
                    self.alarms[side.index()][path] = None;
                    let lost = self.endpoint_mut(side).on_alarm(path, now);
                    self.on_losses(side, &lost);
                    self.pump(side, now)?;
                }
            }
            self.sync_alarms();
            if self.options.strict || self.dispatched.is_multiple_of(AUDIT_INTERVAL) {
                self.audit(now)?;
            }
        }
        self.audit(horizon)?;
        Ok(self.finish())
    }

    fn audit(&self, now: Micros) -> Result<(), SimError> {
        self.server.check_invariants(now)?;
        self.client.check_invariants(now)
    }

    fn on_tick(&mut self, now: Micros, source: usize) -> Result<(), SimError> {
        let src = self.traffic.sources[source].clone();
        let rec = self.traffic.tick_source(source, now);
        let (id, stream, size) = (rec.message_id, rec.stream_id, rec.size);
        self.server.enqueue_message(
            stream,
            src.priority,
            MessageTag { id, len: size },
            Some(src.source_id),
            now,
        );
        let next = now + src.inter_arrival;
        if next < self.cfg.duration {
            self.queue.schedule(next, Event::SourceTick { source });
            if src.priority {
                let (paths, book) = self.server.paths_and_book();
                register_reservation(
                    self.cfg.path_scheduler,
                    paths,
                    book,
                    src.source_id,
                    src.message_size,
                    next,
                );
            }
        }
        self.pump(Side::Server, now)?;
        self.server.book_mut().retire(src.source_id, now);
        Ok(())
    }

    fn on_arrival(
        &mut self,
        now: Micros,
        path: usize,
        dir: Direction,
        packet: Packet,
    ) -> Result<(), SimError> {
        let side = match dir {
            Direction::Forward => Side::Client,
            Direction::Reverse => Side::Server,
        };
        if let Some(ack) = packet.ack {
            let lost = self.endpoint_mut(side).on_ack(path, ack.packet_number, now);
            self.on_losses(side, &lost);
        }
        if let Some(frame) = packet.frame {
            if dir == Direction::Forward {
                self.deliveries.push(DeliveredPacket {
                    time: now,
                    size: packet.size,
                    priority: packet.priority,
                });
            }
            let delivery = self.endpoint_mut(side).deliver(&frame);
            self.goodput += delivery.new_bytes;
            let ack = Packet::ack_only(0, path, packet.packet_number, now);
            let size = ack.size;
            let tx =
                self.net[path].transmit(size, now, dir.opposite(), PacketClass::AckOnly, false)?;
            if let Some(at) = tx.arrival {
                self.queue.schedule(
                    at,
                    Event::Arrival {
                        path,
                        dir: dir.opposite(),
                        packet: ack,
                    },
                );
            }
            if let Some(tag) = delivery.completed {
                match side {
                    Side::Client => {
                        if self
                            .traffic
                            .on_message_complete(tag.id, now, path, packet.duplicated)
                        {
                            let stream = self.traffic.message(tag.id).stream_id;
                            self.client.enqueue_message(
                                stream,
                                true,
                                MessageTag { id: tag.id, len: 1 },
                                None,
                                now,
                            );
                        }
                    }
                    Side::Server => {
                        self.traffic.on_app_ack(tag.id, now);
                    }
                }
            }
        }
        self.pump(side, now)
    }

    fn on_losses(&mut self, side: Side, lost: &[LossReport]) {
        if side != Side::Server {
            return;
        }
        for l in lost {
            if let Some(id) = l.message {
                self.traffic.message_mut(id).loss_involved = true;
            }
        }
    }

    fn forced_drop(&self, packet: &Packet) -> bool {
        let Some(m) = packet
            .frame
            .and_then(|f| f.message.map(|m| (m.id, f.offset)))
        else {
            return false;
        };
        !packet.retransmission
            && self.cfg.forced_drops.iter().any(
                |&ForcedDrop {
                     message,
                     packet: idx,
                 }| { message == m.0 && idx * MAX_PAYLOAD as u64 == m.1 },
            )
    }

    fn pump(&mut self, side: Side, now: Micros) -> Result<(), SimError> {
        let packets = self.endpoint_mut(side).pump(now)?;
        let dir = side.send_direction();
        for packet in packets {
            let drop = side == Side::Server && self.forced_drop(&packet);
            if side == Side::Server && packet.duplicated {
                if let Some(m) = packet.frame.and_then(|f| f.message) {
                    self.traffic.message_mut(m.id).duplicated = true;
                }
            }
            let path = packet.path_id;
            let tx = self.net[path].transmit(packet.size, now, dir, PacketClass::Data, drop)?;
            if let Some(at) = tx.arrival {
                self.queue
                    .schedule(at, Event::Arrival { path, dir, packet });
            }
        }
        Ok(())
    }

    /// Keep exactly one pending alarm per (side, path), at its earliest deadline.
    fn sync_alarms(&mut self) {
        let now = self.queue.now();
        for side in [Side::Server, Side::Client] {
            for path in 0..self.net.len() {
                let want = match side {
                    Side::Server => self.server.paths()[path].next_deadline(),
                    Side::Client => self.client.paths()[path].next_deadline(),
                };
                let slot = &mut self.alarms[side.index()][path];
                if slot.map(|(t, _)| t) == want {
                    continue;
                }
                if let Some((_, h)) = slot.take() {
                    self.queue.cancel(h);
                }
                if let Some(t) = want {
                    let h = self
                        .queue
                        .schedule(t.max(now), Event::LossAlarm { side, path });
                    *slot = Some((t, h));
                }
            }
        }
    }

    fn finish(mut self) -> RunOutput {
        let cfg = self.cfg.clone();
        let from = cfg.warmup;
        let mct = mct_samples(&self.traffic.messages, from);
        let throughput =
            throughput_series(&self.deliveries, from, cfg.duration, cfg.throughput_bin);
        let histories: Vec<CwndHistory> = self
            .server
            .paths()
            .iter()
            .map(|p| p.history().cloned().unwrap_or_default())
            .collect();
        let growth: Vec<_> = histories
            .iter()
            .zip(&cfg.paths)
            .map(|(h, p)| {
                cwnd_growth_ca(
                    h,
                    p.path_id,
                    cfg.path_scheduler.name(),
                    p.rtt_nominal(),
                    from,
                    cfg.duration,
                    Some(p.effective_max_cwnd()),
                )
            })
            .collect();
        let diag = self.server.diagnostics().clone();
        let paths = self
            .server
            .paths()
            .iter()
            .zip(&self.net)
            .map(|(p, n)| PathSummary {
                path_id: p.path_id,
                packets_sent: p.stats().packets_sent,
                packets_lost: p.stats().packets_lost,
                link_drops: n.dropped(Direction::Forward),
                retransmissions: diag.retransmissions[p.path_id],
                decreases: p.stats().decreases,
                mean_srtt_us: p.stats().mean_srtt().map(|v| (v * 10.0).round() / 10.0),
                final_cwnd: p.cwnd(),
            })
            .collect();
        let summary = RunSummary {
            engine_version: ENGINE_VERSION.to_string(),
            seed: cfg.seed,
            paths,
            refrains: diag.refrains,
            blocked: diag.blocked,
            reservations: self.server.book().diagnostics().clone(),
            messages_generated: self.traffic.messages.len() as u64,
            messages_completed: self
                .traffic
                .messages
                .iter()
                .filter(|m| m.completed_at.is_some())
                .count() as u64,
            transport_bytes: self.deliveries.iter().map(|d| d.size as u64).sum(),
            goodput_bytes: self.goodput,
            dispatched_events: self.dispatched,
            dispatch_digest: format!("{:016x}", self.digest.0),
            growth_diagnostics: growth
                .iter()
                .filter_map(|g| g.as_ref().err().map(|e| e.to_string()))
                .collect(),
        };
        let mut send_log = self.server.take_trace();
        send_log.extend(self.client.take_trace());
        send_log.sort_by_key(|r| r.time);
        RunOutput {
            config: cfg,
            messages: std::mem::take(&mut self.traffic.messages),
            mct,
            throughput,
            growth,
            histories,
            send_log,
            summary,
        }
    }
}
