//! Path schedulers: LowRTT, congestion window reservation (CWR) and CWR with
//! redundant transmission of priority data (CWR+RED).

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::engine::Micros;
use crate::schedulers::reservation::{reservation_at_risk, Reservation, ReservationBook};
use crate::transport::{packet_count, PathState, MAX_PACKET_SIZE};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum PathSchedulerKind {
    #[serde(rename = "lowrtt")]
    LowRtt,
    #[serde(rename = "cwr")]
    Cwr,
    #[serde(rename = "cwr_red")]
    CwrRed,
}

impl PathSchedulerKind {
    pub fn name(self) -> &'static str {
        match self {
            PathSchedulerKind::LowRtt => "lowrtt",
            PathSchedulerKind::Cwr => "cwr",
            PathSchedulerKind::CwrRed => "cwr_red",
        }
    }

    pub fn reserves(self) -> bool {
        !matches!(self, PathSchedulerKind::LowRtt)
    }
}

impl fmt::Display for PathSchedulerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PathSchedulerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lowrtt" => Ok(PathSchedulerKind::LowRtt),
            "cwr" => Ok(PathSchedulerKind::Cwr),
            "cwr_red" => Ok(PathSchedulerKind::CwrRed),
            other => Err(format!(
                "unknown path scheduler `{other}` (lowrtt|cwr|cwr_red)"
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PathChoice {
    Single(usize),
    /// One copy per listed path.
    Duplicate(Vec<usize>),
    Blocked,
}

/// Path ids ordered by smoothed RTT, ties broken by id.
pub fn by_srtt(paths: &[PathState]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..paths.len()).collect();
    order.sort_by_key(|&i| (paths[i].srtt(), paths[i].path_id));
    order
}

/// Lowest-RTT path with room for `size` bytes.
pub fn lowrtt_select(paths: &[PathState], size: u32) -> PathChoice {
    by_srtt(paths)
        .into_iter()
        .find(|&i| paths[i].free_cwnd() >= size as u64)
        .map_or(PathChoice::Blocked, PathChoice::Single)
}

/// Priority data may use reserved space, so it only needs raw window room.
pub fn priority_select(paths: &[PathState], size: u32) -> PathChoice {
    lowrtt_select(paths, size)
}

/// Lowest-RTT path with room, skipping paths that still carry an in-flight copy of
/// the frame: a second copy there cannot arrive before the first.
pub fn retransmit_select(paths: &[PathState], size: u32, skip: &[usize]) -> PathChoice {
    by_srtt(paths)
        .into_iter()
        .filter(|i| !skip.contains(i))
        .find(|&i| paths[i].free_cwnd() >= size as u64)
        .map_or(PathChoice::Blocked, PathChoice::Single)
}

/// Whether a background packet may go on `path` without touching reserved space.
pub fn background_admissible(
    path: &PathState,
    book: &ReservationBook,
    size: u32,
    now: Micros,
) -> bool {
    let unreserved = path
        .free_cwnd()
        .saturating_sub(book.active_reserved(path.path_id));
    unreserved >= size as u64 && !reservation_at_risk(path, book, size, now)
}

/// Lowest-RTT path on which no reservation is at risk.
pub fn background_select(
    paths: &[PathState],
    book: &ReservationBook,
    size: u32,
    now: Micros,
) -> PathChoice {
    by_srtt(paths)
        .into_iter()
        .find(|&i| background_admissible(&paths[i], book, size, now))
        .map_or(PathChoice::Blocked, PathChoice::Single)
}

pub fn cwr_select(
    paths: &[PathState],
    book: &ReservationBook,
    size: u32,
    priority: bool,
    now: Micros,
) -> PathChoice {
    if priority {
        priority_select(paths, size)
    } else {
        background_select(paths, book, size, now)
    }
}

/// CWR+RED selection. `duplicate` is the per-message redundancy decision taken when
/// the message's first packet was scheduled; a packet of a non-duplicated message is
/// never copied.
pub fn cwred_select(
    paths: &[PathState],
    book: &ReservationBook,
    size: u32,
    priority: bool,
    duplicate: bool,
    now: Micros,
) -> PathChoice {
    if !priority {
        return background_select(paths, book, size, now);
    }
    if duplicate && paths.len() > 1 && paths.iter().all(|p| p.free_cwnd() >= size as u64) {
        return PathChoice::Duplicate(by_srtt(paths));
    }
    priority_select(paths, size)
}

/// Redundancy decision for a priority message with `remaining_wire_bytes` still to
/// send: copy it only if every path can take all of it right now.
pub fn decide_duplication(paths: &[PathState], remaining_wire_bytes: u64) -> bool {
    paths.len() > 1 && paths.iter().all(|p| p.free_cwnd() >= remaining_wire_bytes)
}

/// Install reservations for a source's next message, due at `due_time`.
///
/// CWR reserves on the current lowest-RTT path, CWR+RED on every path. Each
/// reservation covers the message's packet count at the maximum packet size.
pub fn register_reservation(
    kind: PathSchedulerKind,
    paths: &[PathState],
    book: &mut ReservationBook,
    source_id: usize,
    message_size: u64,
    due_time: Micros,
) -> Vec<Reservation> {
    let bytes = packet_count(message_size) * MAX_PACKET_SIZE as u64;
    let targets = match kind {
        PathSchedulerKind::LowRtt => Vec::new(),
        PathSchedulerKind::Cwr => by_srtt(paths).into_iter().take(1).collect(),
        PathSchedulerKind::CwrRed => by_srtt(paths),
    };
    targets
        .into_iter()
        .map(|i| book.install(source_id, i, bytes, due_time, paths[i].cwnd()))
        .collect()
}
