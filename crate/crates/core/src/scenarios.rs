//! Builders for the standard evaluation setups: two 100 Mbit/s paths, greedy
//! background traffic, Priority FIFO stream scheduling.

use crate::config::ScenarioConfig;
use crate::engine::{Micros, MICROS_PER_MS, MICROS_PER_SEC};
use crate::schedulers::PathSchedulerKind;

pub const LINK_RATE: u64 = 100_000_000;
pub const LOSS_RATE: f64 = 0.0005;

/// Two paths with the given round-trip times in milliseconds.
pub fn two_paths(
    kind: PathSchedulerKind,
    rtt_ms: (u64, u64),
    loss_rate: f64,
    duration_s: u64,
) -> ScenarioConfig {
    ScenarioConfig::new(kind, duration_s * MICROS_PER_SEC)
        .with_path(rtt_ms.0 * MICROS_PER_MS / 2, LINK_RATE, loss_rate)
        .with_path(rtt_ms.1 * MICROS_PER_MS / 2, LINK_RATE, loss_rate)
}

/// One periodic priority source on symmetric 50 ms paths.
pub fn one_source(
    kind: PathSchedulerKind,
    inter_arrival_ms: u64,
    message_size: u64,
    loss_rate: f64,
    duration_s: u64,
) -> ScenarioConfig {
    two_paths(kind, (50, 50), loss_rate, duration_s).with_source(
        inter_arrival_ms * MICROS_PER_MS,
        message_size,
        true,
    )
}

/// The three-source mix: 100 ms/10 kB, 70 ms/7 kB and 135 ms/5 kB.
pub fn three_sources(
    kind: PathSchedulerKind,
    rtt_ms: (u64, u64),
    loss_rate: f64,
    duration_s: u64,
) -> ScenarioConfig {
    const MIX: [(Micros, u64); 3] = [(100, 10_000), (70, 7_000), (135, 5_000)];
    MIX.iter().fold(
        two_paths(kind, rtt_ms, loss_rate, duration_s),
        |c, &(ia, size)| c.with_source(ia * MICROS_PER_MS, size, true),
    )
}

/// The six (inter-arrival ms, message bytes) settings of the growth comparison.
pub const GROWTH_SETTINGS: [(u64, u64); 6] = [
    (50, 10_000),
    (50, 25_000),
    (50, 50_000),
    (100, 10_000),
    (100, 25_000),
    (100, 50_000),
];
