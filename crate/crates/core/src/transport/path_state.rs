//! Per-path congestion control and loss detection.
//!
//! NewReno-style window management in bytes: additive slow start, one packet of
//! growth per window of acknowledged data in congestion avoidance, halving on loss
//! at most once per round trip. Loss is detected either by a per-packet alarm at
//! `sent_time + 9/8 * srtt` or by a packet-number gap of three.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::engine::Micros;
use crate::transport::packet::{StreamFrame, MAX_PACKET_SIZE};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    SlowStart,
    CongestionAvoidance,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CcParams {
    pub max_datagram: u64,
    pub initial_cwnd: u64,
    pub initial_ssthresh: u64,
    pub min_cwnd: u64,
    pub max_cwnd: u64,
    /// Loss alarm fires `alarm_num / alarm_den * srtt` after a packet is sent.
    pub alarm_num: u64,
    pub alarm_den: u64,
    /// Declare a packet lost once an ack arrives for a packet this many numbers later.
    pub packet_threshold: Option<u64>,
}

impl Default for CcParams {
    fn default() -> Self {
        let mss = MAX_PACKET_SIZE as u64;
        Self {
            max_datagram: mss,
            initial_cwnd: 10 * mss,
            initial_ssthresh: 100 * mss,
            min_cwnd: 2 * mss,
            max_cwnd: u64::MAX,
            alarm_num: 9,
            alarm_den: 8,
            packet_threshold: Some(3),
        }
    }
}

/// Sender-side record of a packet that has not been acked or declared lost.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SentPacket {
    pub packet_number: u64,
    pub size: u32,
    pub sent_time: Micros,
    pub loss_deadline: Micros,
    pub frame: Option<StreamFrame>,
    pub priority: bool,
    pub retransmission: bool,
    pub duplicated: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct PathStats {
    pub packets_sent: u64,
    pub bytes_sent: u64,
    pub packets_acked: u64,
    pub packets_lost: u64,
    pub decreases: u64,
    pub rtt_samples: u64,
    srtt_sum: u128,
}

impl PathStats {
    pub fn mean_srtt(&self) -> Option<f64> {
        (self.rtt_samples > 0).then(|| self.srtt_sum as f64 / self.rtt_samples as f64)
    }
}

/// Recorded window history, used for growth analysis.
#[derive(Clone, Debug, Default)]
pub struct CwndHistory {
    /// `(time, cwnd)` after every change, starting with the initial window at t=0.
    pub samples: Vec<(Micros, u64)>,
    pub decreases: Vec<Micros>,
    /// First instant the path was in congestion avoidance.
    pub ca_since: Option<Micros>,
}

#[derive(Debug, Default)]
pub struct AckOutcome {
    pub acked: Option<SentPacket>,
    /// Packets declared lost by the packet-number gap rule.
    pub lost: Vec<SentPacket>,
}

#[derive(Clone, Debug)]
pub struct PathState {
    pub path_id: usize,
    cwnd: u64,
    ssthresh: u64,
    bytes_in_flight: u64,
    phase: Phase,
    srtt: Micros,
    rtt_sampled: bool,
    largest_acked: Option<u64>,
    next_packet_number: u64,
    ledger: BTreeMap<u64, SentPacket>,
    deadlines: BTreeSet<(Micros, u64)>,
    last_decrease: Option<Micros>,
    ca_remainder: u64,
    params: CcParams,
    stats: PathStats,
    history: Option<CwndHistory>,
}

impl PathState {
    /// `initial_rtt` seeds the smoothed RTT until the first sample arrives.
    pub fn new(path_id: usize, params: CcParams, initial_rtt: Micros) -> Self {
        let cwnd = params.initial_cwnd.min(params.max_cwnd);
        Self {
            path_id,
            cwnd,
            ssthresh: params.initial_ssthresh,
            bytes_in_flight: 0,
            phase: Phase::SlowStart,
            srtt: initial_rtt,
            rtt_sampled: false,
            largest_acked: None,
            next_packet_number: 0,
            ledger: BTreeMap::new(),
            deadlines: BTreeSet::new(),
            last_decrease: None,
            ca_remainder: 0,
            params,
            stats: PathStats::default(),
            history: None,
        }
    }

    pub fn record_history(&mut self) {
        let mut h = CwndHistory::default();
        h.samples.push((0, self.cwnd));
        self.history = Some(h);
    }

    pub fn history(&self) -> Option<&CwndHistory> {
        self.history.as_ref()
    }

    pub fn cwnd(&self) -> u64 {
        self.cwnd
    }

    pub fn ssthresh(&self) -> u64 {
        self.ssthresh
    }

    pub fn bytes_in_flight(&self) -> u64 {
        self.bytes_in_flight
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn srtt(&self) -> Micros {
        self.srtt
    }

    pub fn largest_acked(&self) -> Option<u64> {
        self.largest_acked
    }

    pub fn stats(&self) -> &PathStats {
        &self.stats
    }

    pub fn params(&self) -> &CcParams {
        &self.params
    }

    pub fn free_cwnd(&self) -> u64 {
        self.cwnd.saturating_sub(self.bytes_in_flight)
    }

    pub fn in_flight(&self) -> impl Iterator<Item = &SentPacket> {
        self.ledger.values()
    }

    pub fn next_packet_number(&self) -> u64 {
        self.next_packet_number
    }

    pub fn alloc_packet_number(&mut self) -> u64 {
        let pn = self.next_packet_number;
        self.next_packet_number += 1;
        pn
    }

    /// Loss alarm deadline for a packet sent now.
    pub fn loss_deadline(&self, sent_time: Micros) -> Micros {
        sent_time + self.srtt * self.params.alarm_num / self.params.alarm_den
    }

    /// Earliest pending loss alarm.
    pub fn next_deadline(&self) -> Option<Micros> {
        self.deadlines.first().map(|&(t, _)| t)
    }

    /// Bytes in flight from packets sent strictly after `t`.
    pub fn in_flight_sent_after(&self, t: Micros) -> u64 {
        self.ledger
            .values()
            .rev()
            .take_while(|p| p.sent_time > t)
            .map(|p| p.size as u64)
            .sum()
    }

    /// Record a congestion-controlled packet. Fails if it does not fit in the window.
    pub fn on_packet_sent(&mut self, packet: SentPacket) -> Result<(), String> {
        if packet.size as u64 > self.free_cwnd() {
            return Err(format!(
                "path {}: sending {} B with only {} B free (cwnd {}, in flight {})",
                self.path_id,
                packet.size,
                self.free_cwnd(),
                self.cwnd,
                self.bytes_in_flight
            ));
        }
        self.bytes_in_flight += packet.size as u64;
        self.stats.packets_sent += 1;
        self.stats.bytes_sent += packet.size as u64;
        self.deadlines
            .insert((packet.loss_deadline, packet.packet_number));
        self.ledger.insert(packet.packet_number, packet);
        Ok(())
    }

    fn take(&mut self, pn: u64) -> Option<SentPacket> {
        let p = self.ledger.remove(&pn)?;
        self.deadlines.remove(&(p.loss_deadline, pn));
        self.bytes_in_flight -= p.size as u64;
        Some(p)
    }

    fn update_rtt(&mut self, sample: Micros) {
        if self.rtt_sampled {
            self.srtt = (7 * self.srtt + sample) / 8;
        } else {
            self.srtt = sample;
            self.rtt_sampled = true;
        }
        self.stats.rtt_samples += 1;
        self.stats.srtt_sum += self.srtt as u128;
    }

    fn set_cwnd(&mut self, now: Micros, cwnd: u64) {
        if cwnd == self.cwnd {
            return;
        }
        self.cwnd = cwnd;
        if let Some(h) = self.history.as_mut() {
            h.samples.push((now, cwnd));
        }
    }

    fn enter_ca(&mut self, now: Micros) {
        self.phase = Phase::CongestionAvoidance;
        if let Some(h) = self.history.as_mut() {
            h.ca_since.get_or_insert(now);
        }
    }

    fn grow(&mut self, acked: &SentPacket, now: Micros) {
        // Acks for data sent before the last decrease belong to the old window.
        if self.last_decrease.is_some_and(|d| acked.sent_time <= d) {
            return;
        }
        let acked_bytes = acked.size as u64;
        let next = match self.phase {
            Phase::SlowStart => self.cwnd + acked_bytes,
            Phase::CongestionAvoidance => {
                let num = self.params.max_datagram * acked_bytes + self.ca_remainder;
                self.ca_remainder = num % self.cwnd;
                self.cwnd + num / self.cwnd
            }
        };
        self.set_cwnd(now, next.min(self.params.max_cwnd));
        if self.phase == Phase::SlowStart && self.cwnd >= self.ssthresh {
            self.enter_ca(now);
        }
    }

    /// Process an acknowledgment for `pn`. Acks for unknown or already handled
    /// packets are ignored.
    pub fn on_ack(&mut self, pn: u64, now: Micros) -> AckOutcome {
        let Some(acked) = self.take(pn) else {
            return AckOutcome::default();
        };
        self.stats.packets_acked += 1;
        if self.largest_acked.is_none_or(|l| pn > l) {
            self.largest_acked = Some(pn);
            self.update_rtt(now - acked.sent_time);
        }
        self.grow(&acked, now);

        let mut lost = Vec::new();
        if let (Some(threshold), Some(largest)) = (self.params.packet_threshold, self.largest_acked)
        {
            if largest >= threshold {
                let gap: Vec<u64> = self
                    .ledger
                    .range(..=largest - threshold)
                    .map(|(&pn, _)| pn)
                    .collect();
                for pn in gap {
                    lost.extend(self.declare_lost(pn, now));
                }
            }
        }
        AckOutcome {
            acked: Some(acked),
            lost,
        }
    }

    /// Packets whose loss alarm has expired by `now`.
    pub fn on_alarm(&mut self, now: Micros) -> Vec<SentPacket> {
        let expired: Vec<u64> = self
            .deadlines
            .iter()
            .take_while(|&&(t, _)| t <= now)
            .map(|&(_, pn)| pn)
            .collect();
        expired
            .into_iter()
            .filter_map(|pn| self.declare_lost(pn, now))
            .collect()
    }

    /// Remove `pn` from flight as lost and react with a multiplicative decrease,
    /// unless one already happened within the last smoothed RTT.
    pub fn declare_lost(&mut self, pn: u64, now: Micros) -> Option<SentPacket> {
        let lost = self.take(pn)?;
        self.stats.packets_lost += 1;
        self.on_congestion_event(now);
        Some(lost)
    }

    fn on_congestion_event(&mut self, now: Micros) {
        if self.last_decrease.is_some_and(|d| now - d < self.srtt) {
            return;
        }
        self.last_decrease = Some(now);
        self.ssthresh = (self.cwnd / 2).max(self.params.min_cwnd);
        self.set_cwnd(now, self.ssthresh);
        self.ca_remainder = 0;
        self.stats.decreases += 1;
        if let Some(h) = self.history.as_mut() {
            h.decreases.push(now);
        }
        self.enter_ca(now);
    }

    /// Recompute bytes in flight from the ledger and compare.
    pub fn check_conservation(&self) -> Result<(), String> {
        let sum: u64 = self.ledger.values().map(|p| p.size as u64).sum();
        if sum != self.bytes_in_flight {
            return Err(format!(
                "path {}: bytes_in_flight {} != ledger sum {}",
                self.path_id, self.bytes_in_flight, sum
            ));
        }
        if self.cwnd < self.params.min_cwnd.min(self.params.max_cwnd) {
            return Err(format!(
                "path {}: cwnd {} below floor",
                self.path_id, self.cwnd
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sent(ps: &mut PathState, size: u32, t: Micros) -> u64 {
        let pn = ps.alloc_packet_number();
        let deadline = ps.loss_deadline(t);
        ps.on_packet_sent(SentPacket {
            packet_number: pn,
            size,
            sent_time: t,
            loss_deadline: deadline,
            frame: None,
            priority: false,
            retransmission: false,
            duplicated: false,
        })
        .unwrap();
        pn
    }

    fn path_with(cwnd: u64, phase: Phase) -> PathState {
        let params = CcParams {
            initial_cwnd: cwnd,
            initial_ssthresh: if phase == Phase::SlowStart {
                64_000
            } else {
                cwnd
            },
            ..CcParams::default()
        };
        let mut ps = PathState::new(0, params, 50_000);
        ps.phase = phase;
        ps
    }

    #[test]
    fn send_accounts_in_flight() {
        let mut ps = path_with(5400, Phase::SlowStart);
        sent(&mut ps, 1350, 0);
        assert_eq!(ps.bytes_in_flight(), 1350);
        assert_eq!(ps.free_cwnd(), 4050);
    }

    #[test]
    fn send_beyond_window_is_rejected() {
        let mut ps = path_with(5400, Phase::SlowStart);
        for _ in 0..4 {
            sent(&mut ps, 1350, 0);
        }
        assert_eq!(ps.free_cwnd(), 0);
        let err = ps.on_packet_sent(SentPacket {
            packet_number: 99,
            size: 1350,
            sent_time: 0,
            loss_deadline: 1,
            frame: None,
            priority: false,
            retransmission: false,
            duplicated: false,
        });
        assert!(err.is_err());
        assert_eq!(ps.bytes_in_flight(), 5400);
    }

    #[test]
    fn eight_packet_burst() {
        let mut ps = path_with(13_500, Phase::SlowStart);
        for f in crate::transport::packet::packetize(1, None, 0, 10_000) {
            sent(&mut ps, f.packet_size(), 0);
        }
        assert_eq!(ps.bytes_in_flight(), 10_400);
    }

    #[test]
    fn slow_start_is_additive_in_acked_bytes() {
        let mut ps = path_with(2700, Phase::SlowStart);
        let pn = sent(&mut ps, 1350, 0);
        ps.on_ack(pn, 50_000);
        assert_eq!(ps.cwnd(), 4050);
        assert_eq!(ps.phase(), Phase::SlowStart);
    }

    #[test]
    fn congestion_avoidance_increment() {
        let mut ps = path_with(13_500, Phase::CongestionAvoidance);
        let pn = sent(&mut ps, 1350, 0);
        ps.on_ack(pn, 50_000);
        assert_eq!(ps.cwnd(), 13_635);
    }

    #[test]
    fn congestion_avoidance_grows_one_packet_per_window() {
        let mut ps = path_with(13_500, Phase::CongestionAvoidance);
        let pns: Vec<u64> = (0..10).map(|_| sent(&mut ps, 1350, 0)).collect();
        for pn in pns {
            ps.on_ack(pn, 50_000);
        }
        // each ack adds mss^2 / cwnd against the window as it grows
        let mut expect = 13_500.0f64;
        for _ in 0..10 {
            expect += 1350.0 * 1350.0 / expect.floor();
        }
        let growth = ps.cwnd() as f64 - 13_500.0;
        assert!(
            (growth - (expect - 13_500.0)).abs() <= 1.0,
            "{growth} vs {expect}"
        );
    }

    #[test]
    fn free_after_ack_in_ca() {
        let mut ps = path_with(5400, Phase::CongestionAvoidance);
        let pns: Vec<u64> = (0..4).map(|_| sent(&mut ps, 1350, 0)).collect();
        ps.on_ack(pns[0], 50_000);
        // 1350 * 1350 / 5400 = 337.5, rounded down
        assert_eq!(ps.free_cwnd(), 1350 + 337);
    }

    #[test]
    fn loss_halves_window() {
        let mut ps = path_with(20_000, Phase::CongestionAvoidance);
        let pn = sent(&mut ps, 1350, 0);
        ps.declare_lost(pn, 60_000);
        assert_eq!(ps.cwnd(), 10_000);
        assert_eq!(ps.bytes_in_flight(), 0);
    }

    #[test]
    fn loss_respects_floor() {
        let mut ps = path_with(2700, Phase::CongestionAvoidance);
        let pn = sent(&mut ps, 1350, 0);
        ps.declare_lost(pn, 60_000);
        assert_eq!(ps.cwnd(), 2700);
    }

    #[test]
    fn one_decrease_per_round() {
        let mut ps = path_with(40_000, Phase::CongestionAvoidance);
        let a = sent(&mut ps, 1350, 0);
        let b = sent(&mut ps, 1350, 0);
        ps.declare_lost(a, 60_000);
        ps.declare_lost(b, 70_000);
        assert_eq!(ps.cwnd(), 20_000);
        assert_eq!(ps.stats().decreases, 1);
    }

    #[test]
    fn rtt_smoothing() {
        let mut ps = path_with(20_000, Phase::SlowStart);
        let a = sent(&mut ps, 1350, 0);
        let b = sent(&mut ps, 1350, 10_000);
        ps.on_ack(a, 40_000);
        assert_eq!(ps.srtt(), 40_000);
        ps.on_ack(b, 90_000);
        assert_eq!(ps.srtt(), (7 * 40_000 + 80_000) / 8);
    }

    #[test]
    fn alarm_declares_loss_at_nine_eighths_srtt() {
        let mut ps = path_with(20_000, Phase::CongestionAvoidance);
        let pn = sent(&mut ps, 1350, 0);
        assert_eq!(ps.next_deadline(), Some(56_250));
        assert!(ps.on_alarm(56_249).is_empty());
        let lost = ps.on_alarm(56_250);
        assert_eq!(lost.len(), 1);
        assert_eq!(lost[0].packet_number, pn);
        assert_eq!(ps.next_deadline(), None);
    }

    #[test]
    fn ack_cancels_alarm() {
        let mut ps = path_with(20_000, Phase::CongestionAvoidance);
        let pn = sent(&mut ps, 1350, 0);
        ps.on_ack(pn, 50_000);
        assert_eq!(ps.next_deadline(), None);
        assert!(ps.on_alarm(100_000).is_empty());
    }

    #[test]
    fn gap_of_three_declares_loss_before_alarm() {
        let mut ps = path_with(20_000, Phase::CongestionAvoidance);
        let pns: Vec<u64> = (0..4).map(|i| sent(&mut ps, 1350, i * 100)).collect();
        assert!(ps.on_ack(pns[1], 50_100).lost.is_empty());
        assert!(ps.on_ack(pns[2], 50_200).lost.is_empty());
        let out = ps.on_ack(pns[3], 50_300);
        assert_eq!(out.lost.len(), 1);
        assert_eq!(out.lost[0].packet_number, pns[0]);
        // Still short of the 56 250 us alarm for pns[0].
        assert!(ps.next_deadline().is_none_or(|t| t > 50_300));
    }

    #[test]
    fn duplicate_ack_ignored() {
        let mut ps = path_with(20_000, Phase::CongestionAvoidance);
        let pn = sent(&mut ps, 1350, 0);
        ps.on_ack(pn, 50_000);
        let cwnd = ps.cwnd();
        let out = ps.on_ack(pn, 51_000);
        assert!(out.acked.is_none());
        assert_eq!(ps.cwnd(), cwnd);
    }

    #[test]
    fn no_growth_for_acks_of_pre_loss_data() {
        let mut ps = path_with(20_000, Phase::CongestionAvoidance);
        let a = sent(&mut ps, 1350, 0);
        let b = sent(&mut ps, 1350, 0);
        ps.declare_lost(a, 56_000);
        ps.on_ack(b, 57_000);
        assert_eq!(ps.cwnd(), 10_000);
    }

    #[test]
    fn cwnd_capped() {
        let params = CcParams {
            max_cwnd: 14_000,
            ..CcParams::default()
        };
        let mut ps = PathState::new(0, params, 50_000);
        let pn = sent(&mut ps, 1350, 0);
        ps.on_ack(pn, 50_000);
        assert_eq!(ps.cwnd(), 14_000);
    }
}
