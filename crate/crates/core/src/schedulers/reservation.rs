//! Congestion window reservations.
//!
//! A reservation holds bytes of a path's window free for a priority message expected
//! at `due_time`. Background data may only use the window if every active
//! reservation would still find its bytes free at its due time, predicted under the
//! assumption that the window stays constant and that a packet sent at `s` is acked
//! at `s + srtt`.

use serde::Serialize;

use crate::engine::Micros;
use crate::transport::PathState;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ReservationState {
    Active,
    Consumed,
    Dropped,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Reservation {
    pub source_id: usize,
    pub path_id: usize,
    /// Bytes still held.
    pub bytes: u64,
    pub due_time: Micros,
    pub state: ReservationState,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ReservationDiagnostics {
    pub installed: u64,
    pub clamped: u64,
    pub dropped: u64,
    pub consumed_bytes: u64,
}

/// All reservations of one sender, pooled per path.
#[derive(Clone, Debug)]
pub struct ReservationBook {
    per_path: Vec<Vec<Reservation>>,
    diagnostics: ReservationDiagnostics,
}

impl ReservationBook {
    pub fn new(paths: usize) -> Self {
        Self {
            per_path: vec![Vec::new(); paths],
            diagnostics: ReservationDiagnostics::default(),
        }
    }

    pub fn diagnostics(&self) -> &ReservationDiagnostics {
        &self.diagnostics
    }

    pub fn on_path(&self, path_id: usize) -> &[Reservation] {
        &self.per_path[path_id]
    }

    pub fn active(&self, path_id: usize) -> impl Iterator<Item = &Reservation> {
        self.per_path[path_id]
            .iter()
            .filter(|r| r.state == ReservationState::Active)
    }

    pub fn active_reserved(&self, path_id: usize) -> u64 {
        self.active(path_id).map(|r| r.bytes).sum()
    }

    pub fn has_active(&self) -> bool {
        (0..self.per_path.len()).any(|p| self.active(p).next().is_some())
    }

    /// Install a reservation, clamped so the path's active total never exceeds `cwnd`.
    pub fn install(
        &mut self,
        source_id: usize,
        path_id: usize,
        bytes: u64,
        due_time: Micros,
        cwnd: u64,
    ) -> Reservation {
        let available = cwnd.saturating_sub(self.active_reserved(path_id));
        let granted = bytes.min(available);
        if granted < bytes {
            self.diagnostics.clamped += 1;
        }
        self.diagnostics.installed += 1;
        let r = Reservation {
            source_id,
            path_id,
            bytes: granted,
            due_time,
            state: if granted > 0 {
                ReservationState::Active
            } else {
                ReservationState::Consumed
            },
        };
        let list = &mut self.per_path[path_id];
        let at = list.partition_point(|x| x.due_time <= due_time);
        list.insert(at, r.clone());
        r
    }

    /// Forget a source's reservations that are due by `now`; their message has been
    /// generated and handed to the stream scheduler.
    pub fn retire(&mut self, source_id: usize, now: Micros) {
        for list in &mut self.per_path {
            list.retain(|r| !(r.source_id == source_id && r.due_time <= now));
        }
    }

    /// Charge a sent priority packet against the path's pool, earliest due first.
    pub fn consume(&mut self, path_id: usize, mut bytes: u64) -> u64 {
        let mut consumed = 0;
        for r in self.per_path[path_id]
            .iter_mut()
            .filter(|r| r.state == ReservationState::Active)
        {
            if bytes == 0 {
                break;
            }
            let take = r.bytes.min(bytes);
            r.bytes -= take;
            bytes -= take;
            consumed += take;
            if r.bytes == 0 {
                r.state = ReservationState::Consumed;
            }
        }
        self.diagnostics.consumed_bytes += consumed;
        consumed
    }

    /// A loss on the path: reservations due before `horizon` can no longer be met and
    /// are dropped; later ones are trimmed in due order to fit the window `cwnd`.
    pub fn drop_near(&mut self, path_id: usize, horizon: Micros, cwnd: u64) -> usize {
        let mut n = 0;
        let mut room = cwnd;
        for r in &mut self.per_path[path_id] {
            if r.state != ReservationState::Active {
                continue;
            }
            if r.due_time < horizon || room == 0 {
                r.state = ReservationState::Dropped;
                n += 1;
                continue;
            }
            r.bytes = r.bytes.min(room);
            room -= r.bytes;
        }
        self.diagnostics.dropped += n as u64;
        n
    }
}

/// Predicted free window at `at`, if a packet of `candidate` bytes were sent `now`.
pub fn predicted_free(path: &PathState, at: Micros, candidate: u32, now: Micros) -> i64 {
    let srtt = path.srtt();
    let still_in_flight = match at.checked_sub(srtt) {
        Some(cutoff) => path.in_flight_sent_after(cutoff),
        None => path.bytes_in_flight(),
    };
    let candidate_in_flight = if now + srtt > at { candidate as u64 } else { 0 };
    path.cwnd() as i64 - still_in_flight as i64 - candidate_in_flight as i64
}

/// Bytes that must be free at `at`: the reservation due then plus earlier ones whose
/// messages would still be in flight.
fn required_at(path: &PathState, book: &ReservationBook, at: Micros) -> u64 {
    let srtt = path.srtt();
    book.active(path.path_id)
        .filter(|r| r.due_time <= at && r.due_time + srtt > at)
        .map(|r| r.bytes)
        .sum()
}

/// Whether sending a background packet of `candidate` bytes now could leave some
/// active reservation without its bytes at its due time.
pub fn reservation_at_risk(
    path: &PathState,
    book: &ReservationBook,
    candidate: u32,
    now: Micros,
) -> bool {
    let mut last_due = None;
    for r in book.active(path.path_id) {
        if last_due == Some(r.due_time) {
            continue;
        }
        last_due = Some(r.due_time);
        let need = required_at(path, book, r.due_time) as i64;
        if predicted_free(path, r.due_time, candidate, now) < need {
            return true;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::{CcParams, SentPacket};

    fn path(cwnd: u64, srtt: Micros) -> PathState {
        let params = CcParams {
            initial_cwnd: cwnd,
            ..CcParams::default()
        };
        PathState::new(0, params, srtt)
    }

    fn send(p: &mut PathState, size: u32, t: Micros) {
        let pn = p.alloc_packet_number();
        p.on_packet_sent(SentPacket {
            packet_number: pn,
            size,
            sent_time: t,
            loss_deadline: t + 1,
            frame: None,
            priority: false,
            retransmission: false,
            duplicated: false,
        })
        .unwrap();
    }

    #[test]
    fn no_reservations_never_at_risk() {
        let p = path(2700, 50_000);
        let book = ReservationBook::new(1);
        assert!(!reservation_at_risk(&p, &book, 1350, 0));
    }

    #[test]
    fn candidate_acked_before_due_time_is_safe() {
        // cwnd 4 packets, 3 reserved 60 ms out; the candidate is acked after 50 ms
        let mut p = path(5400, 50_000);
        send(&mut p, 1350, 0);
        send(&mut p, 1350, 0);
        let mut book = ReservationBook::new(1);
        book.install(0, 0, 4050, 60_000, p.cwnd());
        assert!(!reservation_at_risk(&p, &book, 1350, 0));
        assert_eq!(predicted_free(&p, 60_000, 1350, 0), 5400);
    }

    #[test]
    fn candidate_in_flight_at_due_time_is_at_risk() {
        let mut p = path(5400, 50_000);
        send(&mut p, 1350, 0);
        let mut book = ReservationBook::new(1);
        book.install(0, 0, 4050, 30_000, p.cwnd());
        // 5400 - 1350 - 1350 = 2700 < 4050
        assert_eq!(predicted_free(&p, 30_000, 1350, 0), 2700);
        assert!(reservation_at_risk(&p, &book, 1350, 0));
    }

    #[test]
    fn one_packet_fits_beside_three_reserved() {
        let p = path(5400, 50_000);
        let mut book = ReservationBook::new(1);
        book.install(0, 0, 3 * 1350, 30_000, p.cwnd());
        assert!(!reservation_at_risk(&p, &book, 1350, 0));
        let mut p2 = p.clone();
        send(&mut p2, 1350, 0);
        assert!(reservation_at_risk(&p2, &book, 1350, 0));
    }

    #[test]
    fn earlier_message_still_in_flight_counts() {
        let p = path(20_000, 50_000);
        let mut book = ReservationBook::new(1);
        book.install(0, 0, 8_000, 10_000, p.cwnd());
        book.install(1, 0, 8_000, 40_000, p.cwnd());
        // At 40 ms both messages are in flight: 16 000 needed, 20 000 - 1350 left
        assert!(!reservation_at_risk(&p, &book, 1350, 0));
        assert!(reservation_at_risk(&p, &book, 5_000, 0));
    }

    #[test]
    fn install_clamps_to_window() {
        let mut book = ReservationBook::new(1);
        let a = book.install(0, 0, 10_800, 100, 13_500);
        let b = book.install(1, 0, 10_800, 200, 13_500);
        assert_eq!(a.bytes, 10_800);
        assert_eq!(b.bytes, 2_700);
        assert_eq!(book.diagnostics().clamped, 1);
        assert!(book.active_reserved(0) <= 13_500);
    }

    #[test]
    fn consume_reduces_pool() {
        let mut book = ReservationBook::new(1);
        book.install(0, 0, 10_800, 100, 50_000);
        book.consume(0, 1350);
        assert_eq!(book.active_reserved(0), 9_450);
        for _ in 0..7 {
            book.consume(0, 1350);
        }
        assert_eq!(book.active_reserved(0), 0);
        assert_eq!(book.on_path(0)[0].state, ReservationState::Consumed);
    }

    #[test]
    fn consume_without_reservation_is_noop() {
        let mut book = ReservationBook::new(2);
        assert_eq!(book.consume(1, 1350), 0);
    }

    #[test]
    fn pooled_across_sources() {
        let mut book = ReservationBook::new(1);
        book.install(0, 0, 2_700, 100, 50_000);
        book.install(1, 0, 2_700, 200, 50_000);
        book.consume(0, 4_000);
        assert_eq!(book.active_reserved(0), 1_400);
    }

    #[test]
    fn loss_shortly_before_due_drops_reservation() {
        let mut book = ReservationBook::new(2);
        book.install(0, 0, 10_800, 600_000, 50_000);
        book.install(0, 1, 10_800, 600_000, 50_000);
        // loss at 570 ms with srtt 50 ms: the window cannot recover in time
        assert_eq!(book.drop_near(0, 620_000, 25_000), 1);
        assert_eq!(book.on_path(0)[0].state, ReservationState::Dropped);
        assert_eq!(book.active_reserved(0), 0);
        assert_eq!(book.active_reserved(1), 10_800);
    }

    #[test]
    fn later_reservations_survive_loss_trimmed_to_window() {
        let mut book = ReservationBook::new(1);
        book.install(0, 0, 10_800, 100_000, 50_000);
        book.install(1, 0, 10_800, 300_000, 50_000);
        book.install(2, 0, 10_800, 400_000, 50_000);
        // loss at 40 ms, srtt 50 ms, window halved to 15 000
        assert_eq!(book.drop_near(0, 90_000, 15_000), 1);
        let bytes: Vec<u64> = book.on_path(0).iter().map(|r| r.bytes).collect();
        assert_eq!(bytes, vec![10_800, 4_200, 10_800]);
        assert_eq!(book.on_path(0)[2].state, ReservationState::Dropped);
        assert_eq!(book.active_reserved(0), 15_000);
    }

    #[test]
    fn retire_removes_due_reservations_of_source() {
        let mut book = ReservationBook::new(1);
        book.install(0, 0, 100, 500, 50_000);
        book.install(0, 0, 100, 600, 50_000);
        book.install(1, 0, 100, 500, 50_000);
        book.retire(0, 500);
        assert_eq!(book.on_path(0).len(), 2);
        assert!(book
            .on_path(0)
            .iter()
            .all(|r| !(r.source_id == 0 && r.due_time == 500)));
    }
}
