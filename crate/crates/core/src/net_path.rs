//! Emulated paths: a pair of unidirectional links with FIFO serialization at a fixed
//! rate, fixed propagation delay and independent Bernoulli loss.

use serde::Serialize;

use crate::engine::Micros;
use crate::error::SimError;
use crate::rng::{link_stream_id, RngStream};

/// Direction of travel on a path. Forward carries server-to-client data.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    Reverse,
}

impl Direction {
    pub fn index(self) -> usize {
        match self {
            Direction::Forward => 0,
            Direction::Reverse => 1,
        }
    }

    pub fn opposite(self) -> Direction {
        match self {
            Direction::Forward => Direction::Reverse,
            Direction::Reverse => Direction::Forward,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PathConfig {
    pub path_id: usize,
    /// One-way propagation delay, identical in both directions.
    pub owd: Micros,
    /// Link rate in bits per second.
    pub rate: u64,
    /// Per-packet loss probability for data-carrying packets.
    pub loss_rate: f64,
    /// Whether ack-only packets are subject to loss as well.
    pub ack_loss_enabled: bool,
    /// Upper bound on the congestion window in bytes. `None` means the path's
    /// bandwidth-delay product.
    pub max_cwnd: Option<u64>,
}

impl PathConfig {
    pub fn new(path_id: usize, owd: Micros, rate: u64, loss_rate: f64) -> Self {
        Self {
            path_id,
            owd,
            rate,
            loss_rate,
            ack_loss_enabled: false,
            max_cwnd: None,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.owd == 0 {
            return Err(format!("path {}: owd must be > 0", self.path_id));
        }
        if self.rate == 0 {
            return Err(format!("path {}: rate must be > 0", self.path_id));
        }
        if !(0.0..1.0).contains(&self.loss_rate) {
            return Err(format!(
                "path {}: loss_rate {} outside [0, 1)",
                self.path_id, self.loss_rate
            ));
        }
        Ok(())
    }

    /// Nominal round-trip time, twice the one-way delay.
    pub fn rtt_nominal(&self) -> Micros {
        path_rtt_nominal(self)
    }

    /// Bytes in flight that exactly fill the pipe at the nominal RTT.
    pub fn bandwidth_delay_product(&self) -> u64 {
        (self.rate as u128 * self.rtt_nominal() as u128 / 8_000_000) as u64
    }

    pub fn effective_max_cwnd(&self) -> u64 {
        self.max_cwnd
            .unwrap_or_else(|| self.bandwidth_delay_product())
    }
}

pub fn path_rtt_nominal(cfg: &PathConfig) -> Micros {
    2 * cfg.owd
}

/// Serialization time of `size` bytes at `rate` bit/s, rounded up to whole microseconds.
pub fn serialization_time(size: u32, rate: u64) -> Micros {
    let bits = size as u128 * 8 * 1_000_000;
    bits.div_ceil(rate as u128) as Micros
}

/// Outcome of handing one packet to a link.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LinkTransmission {
    pub send_start: Micros,
    pub serialization: Micros,
    /// `None` if the packet was lost.
    pub arrival: Option<Micros>,
}

impl LinkTransmission {
    pub fn send_end(&self) -> Micros {
        self.send_start + self.serialization
    }
}

/// One direction of a path: a FIFO serializer followed by a propagation delay.
#[derive(Clone, Debug)]
pub struct Link {
    owd: Micros,
    rate: u64,
    busy_until: Micros,
}

impl Link {
    pub fn new(owd: Micros, rate: u64) -> Self {
        Self {
            owd,
            rate,
            busy_until: 0,
        }
    }

    pub fn busy_until(&self) -> Micros {
        self.busy_until
    }

    pub fn transmit(&mut self, size: u32, now: Micros, lost: bool) -> LinkTransmission {
        let send_start = now.max(self.busy_until);
        let serialization = serialization_time(size, self.rate);
        self.busy_until = send_start + serialization;
        LinkTransmission {
            send_start,
            serialization,
            arrival: (!lost).then_some(self.busy_until + self.owd),
        }
    }
}

/// What kind of packet is being handed to a path; decides whether a loss draw happens.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PacketClass {
    Data,
    AckOnly,
}

/// Both directions of one path with their loss streams.
#[derive(Clone, Debug)]
pub struct NetPath {
    config: PathConfig,
    links: [Link; 2],
    loss: [RngStream; 2],
    delivered: [u64; 2],
    dropped: [u64; 2],
}

impl NetPath {
    pub fn new(config: PathConfig, seed: u64) -> Self {
        let links = [
            Link::new(config.owd, config.rate),
            Link::new(config.owd, config.rate),
        ];
        let loss = [
            RngStream::new(seed, link_stream_id(config.path_id, 0)),
            RngStream::new(seed, link_stream_id(config.path_id, 1)),
        ];
        Self {
            config,
            links,
            loss,
            delivered: [0; 2],
            dropped: [0; 2],
        }
    }

    pub fn config(&self) -> &PathConfig {
        &self.config
    }

    pub fn link(&self, dir: Direction) -> &Link {
        &self.links[dir.index()]
    }

    /// Serialize a packet onto the link for `dir`.
    ///
    /// Data packets always consume one loss draw; ack-only packets consume one only
    /// when ack loss is enabled. `force_drop` discards the packet after its draw so
    /// the stream stays aligned with an unforced run.
    pub fn transmit(
        &mut self,
        size: u32,
        now: Micros,
        dir: Direction,
        class: PacketClass,
        force_drop: bool,
    ) -> Result<LinkTransmission, SimError> {
        let i = dir.index();
        let drawn = match class {
            PacketClass::Data => self.loss[i].bernoulli(self.config.loss_rate)?,
            PacketClass::AckOnly if self.config.ack_loss_enabled => {
                self.loss[i].bernoulli(self.config.loss_rate)?
            }
            PacketClass::AckOnly => false,
        };
        let lost = drawn || force_drop;
        if lost {
            self.dropped[i] += 1;
        } else {
            self.delivered[i] += 1;
        }
        Ok(self.links[i].transmit(size, now, lost))
    }

    pub fn dropped(&self, dir: Direction) -> u64 {
        self.dropped[dir.index()]
    }

    pub fn delivered(&self, dir: Direction) -> u64 {
        self.delivered[dir.index()]
    }
}
