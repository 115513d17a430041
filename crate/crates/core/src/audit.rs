//! Whole-run invariant checks over a traced run.
//!
//! Window conservation and reservation admission are asserted inside the simulation
//! itself (after every event with [`SimOptions::strict`](crate::SimOptions)); the
//! checks here need the complete send log and message records.

use std::collections::BTreeMap;

use crate::connection::{SendRecord, Side};
use crate::schedulers::{PathSchedulerKind, StreamSchedulerKind};
use crate::sim::RunOutput;
use crate::traffic::BACKGROUND_STREAM;

fn server_sends(run: &RunOutput) -> impl Iterator<Item = &SendRecord> {
    run.send_log.iter().filter(|r| r.side == Side::Server)
}

/// A stream carries a new message only after the previous one was app-acked, and no
/// frame of the previous message is sent once the next one is queued.
pub fn one_message_per_stream(run: &RunOutput) -> Result<(), String> {
    let mut by_stream: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (i, m) in run.messages.iter().enumerate() {
        by_stream.entry(m.stream_id).or_default().push(i);
    }
    for (stream, msgs) in &by_stream {
        for w in msgs.windows(2) {
            let (prev, next) = (&run.messages[w[0]], &run.messages[w[1]]);
            match prev.app_acked_at {
                Some(t) if t <= next.generated_at => {}
                _ => {
                    return Err(format!(
                        "stream {stream}: message {} queued at {} before message {} was app-acked",
                        next.message_id, next.generated_at, prev.message_id
                    ))
                }
            }
            if let Some(r) = server_sends(run).find(|r| {
                r.stream_id == *stream
                    && r.message_id == Some(prev.message_id)
                    && r.time >= next.generated_at
            }) {
                return Err(format!(
                    "stream {stream}: frame of message {} sent at {} after message {} was queued",
                    prev.message_id, r.time, next.message_id
                ));
            }
        }
    }
    Ok(())
}

/// Under Priority FIFO no fresh background frame goes out while a priority frame
/// would have fit on the same path.
pub fn priority_fifo_order(run: &RunOutput) -> Result<(), String> {
    if run.config.stream_scheduler != StreamSchedulerKind::PriorityFifo {
        return Ok(());
    }
    match server_sends(run)
        .find(|r| r.stream_id == BACKGROUND_STREAM && !r.retransmission && r.priority_admissible)
    {
        Some(r) => Err(format!(
            "background packet {} on path {} at {} passed an admissible priority frame",
            r.packet_number, r.path_id, r.time
        )),
        None => Ok(()),
    }
}

/// Priority frames under CWR+RED are copied on every path at their first send or
/// marked as refrained; nothing is copied later and retransmissions are single.
pub fn no_late_duplication(run: &RunOutput) -> Result<(), String> {
    let n_paths = run.config.paths.len();
    let red = run.config.path_scheduler == PathSchedulerKind::CwrRed;
    let mut fresh: BTreeMap<(u64, Option<u64>, u64), Vec<&SendRecord>> = BTreeMap::new();
    for r in server_sends(run) {
        if r.retransmission {
            if r.duplicated {
                return Err(format!("retransmission duplicated at {}", r.time));
            }
            continue;
        }
        if r.duplicated && !(red && r.priority) {
            return Err(format!("unexpected duplicate at {}", r.time));
        }
        if red && r.priority && !r.duplicated && !r.refrained {
            return Err(format!(
                "priority packet at {} neither duplicated nor refrained",
                r.time
            ));
        }
        fresh
            .entry((r.stream_id, r.message_id, r.offset))
            .or_default()
            .push(r);
    }
    for ((stream, msg, offset), copies) in fresh {
        let first = copies[0];
        let ok = if first.duplicated {
            let mut paths: Vec<usize> = copies.iter().map(|c| c.path_id).collect();
            paths.sort_unstable();
            paths.dedup();
            copies.iter().all(|c| c.time == first.time && c.duplicated)
                && copies.len() == n_paths
                && paths.len() == n_paths
        } else {
            copies.len() == 1
        };
        if !ok {
            return Err(format!(
                "stream {stream} message {msg:?} offset {offset}: {} fresh copies, first at {}",
                copies.len(),
                first.time
            ));
        }
    }
    Ok(())
}

/// Every log-based check.
pub fn check_all(run: &RunOutput) -> Result<(), String> {
    one_message_per_stream(run)?;
    priority_fifo_order(run)?;
    no_late_duplication(run)
}
