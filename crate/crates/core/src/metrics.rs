//! Evaluation outputs: message completion times, their CCDF, binned throughput and
//! per-RTT congestion window growth in congestion avoidance.
//!
//! Everything here is post-processing over traces collected by the simulation.

use std::fmt::Write as _;

use serde::Serialize;

use crate::engine::Micros;
use crate::error::MetricsError;
use crate::traffic::MessageRecord;
use crate::transport::{CwndHistory, MessageId};

/// Fewest usable RTT windows for a growth figure.
pub const MIN_GROWTH_WINDOWS: usize = 20;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MctSample {
    pub source_id: usize,
    pub message_id: MessageId,
    pub mct: Micros,
    pub generated_at: Micros,
    pub loss_involved: bool,
    pub duplicated: bool,
}

/// Completed priority messages generated at or after `from`.
pub fn mct_samples(messages: &[MessageRecord], from: Micros) -> Vec<MctSample> {
    messages
        .iter()
        .filter(|m| m.priority && m.generated_at >= from)
        .filter_map(|m| {
            Some(MctSample {
                source_id: m.source_id,
                message_id: m.message_id,
                mct: m.mct()?,
                generated_at: m.generated_at,
                loss_involved: m.loss_involved,
                duplicated: m.duplicated,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CcdfPoint {
    pub value: Micros,
    /// Fraction of samples strictly greater than `value`.
    pub fraction: f64,
}

/// Empirical CCDF at each distinct sample value.
pub fn ccdf(values: &[Micros]) -> Vec<CcdfPoint> {
    let mut sorted = values.to_vec();
    sorted.sort_unstable();
    let n = sorted.len() as f64;
    let mut out = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let v = sorted[i];
        let j = sorted.partition_point(|&x| x <= v);
        out.push(CcdfPoint {
            value: v,
            fraction: (sorted.len() - j) as f64 / n,
        });
        i = j;
    }
    out
}

/// Fraction of `sorted` strictly greater than `x`.
pub fn fraction_above(sorted: &[Micros], x: Micros) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    (sorted.len() - sorted.partition_point(|&v| v <= x)) as f64 / sorted.len() as f64
}

/// Largest vertical gap between two empirical CCDFs.
pub fn ccdf_distance(a: &[Micros], b: &[Micros]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_unstable();
    b.sort_unstable();
    a.iter()
        .chain(b.iter())
        .map(|&x| (fraction_above(&a, x) - fraction_above(&b, x)).abs())
        .fold(0.0, f64::max)
}

/// One delivered transport packet on the forward direction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DeliveredPacket {
    pub time: Micros,
    pub size: u32,
    pub priority: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ThroughputBin {
    pub bin_start: Micros,
    pub bin_width: Micros,
    pub total_bytes: u64,
    pub priority_bytes: u64,
}

impl ThroughputBin {
    pub fn mbps(&self) -> f64 {
        self.total_bytes as f64 * 8.0 / self.bin_width as f64
    }
}

/// Bin deliveries in `[start, end)` by `bin_width`. Trailing partial bins are kept.
pub fn throughput_series(
    trace: &[DeliveredPacket],
    start: Micros,
    end: Micros,
    bin_width: Micros,
) -> Vec<ThroughputBin> {
    assert!(bin_width > 0, "bin width must be positive");
    if end <= start {
        return Vec::new();
    }
    let n = (end - start).div_ceil(bin_width) as usize;
    let mut bins: Vec<ThroughputBin> = (0..n)
        .map(|i| ThroughputBin {
            bin_start: start + i as u64 * bin_width,
            bin_width,
            total_bytes: 0,
            priority_bytes: 0,
        })
        .collect();
    for d in trace.iter().filter(|d| d.time >= start && d.time < end) {
        let b = &mut bins[((d.time - start) / bin_width) as usize];
        b.total_bytes += d.size as u64;
        if d.priority {
            b.priority_bytes += d.size as u64;
        }
    }
    bins
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CwndGrowthRecord {
    pub path_id: usize,
    pub scheduler: String,
    /// Mean window increase per RTT in bytes.
    pub mean_growth: f64,
    pub sample_window: (Micros, Micros),
    pub windows: usize,
    /// Windows left out because they contain a decrease.
    pub excluded_decrease: usize,
    /// Windows left out because the path was not yet in congestion avoidance.
    pub excluded_slow_start: usize,
    /// Windows left out because the window sat at its upper bound.
    pub excluded_capped: usize,
}

/// Window size in effect at `t`.
fn cwnd_at(samples: &[(Micros, u64)], t: Micros) -> u64 {
    let i = samples.partition_point(|&(st, _)| st <= t);
    if i == 0 {
        samples.first().map_or(0, |s| s.1)
    } else {
        samples[i - 1].1
    }
}

/// Mean congestion-avoidance growth per `rtt` over consecutive windows in `[start, end]`.
///
/// Windows with a multiplicative decrease, windows before the path first left slow
/// start and windows ending at `cap` are not counted.
pub fn cwnd_growth_ca(
    history: &CwndHistory,
    path_id: usize,
    scheduler: &str,
    rtt: Micros,
    start: Micros,
    end: Micros,
    cap: Option<u64>,
) -> Result<CwndGrowthRecord, MetricsError> {
    let mut rec = CwndGrowthRecord {
        path_id,
        scheduler: scheduler.to_string(),
        mean_growth: 0.0,
        sample_window: (start, end),
        windows: 0,
        excluded_decrease: 0,
        excluded_slow_start: 0,
        excluded_capped: 0,
    };
    let mut total: i128 = 0;
    let mut ws = start;
    while rtt > 0 && ws + rtt <= end {
        let we = ws + rtt;
        let (c0, c1) = (cwnd_at(&history.samples, ws), cwnd_at(&history.samples, we));
        let first_dec = history.decreases.partition_point(|&d| d < ws);
        if history.decreases.get(first_dec).is_some_and(|&d| d <= we) {
            rec.excluded_decrease += 1;
        } else if history.ca_since.is_none_or(|ca| ca > ws) {
            rec.excluded_slow_start += 1;
        } else if cap.is_some_and(|c| c1 >= c) {
            rec.excluded_capped += 1;
        } else {
            rec.windows += 1;
            total += c1 as i128 - c0 as i128;
        }
        ws = we;
    }
    // A path that never sent anything has a flat window; report zero growth.
    let idle = history.samples.len() <= 1 && history.decreases.is_empty();
    if idle {
        return Ok(rec);
    }
    if rec.windows < MIN_GROWTH_WINDOWS {
        return Err(MetricsError::InsufficientGrowthSamples {
            path_id,
            windows: rec.windows,
            required: MIN_GROWTH_WINDOWS,
        });
    }
    rec.mean_growth = total as f64 / rec.windows as f64;
    Ok(rec)
}

pub fn mct_csv(samples: &[MctSample]) -> String {
    let mut s =
        String::from("source_id,message_id,generated_at_us,mct_us,loss_involved,duplicated\n");
    for m in samples {
        writeln!(
            s,
            "{},{},{},{},{},{}",
            m.source_id,
            m.message_id,
            m.generated_at,
            m.mct,
            m.loss_involved as u8,
            m.duplicated as u8
        )
        .unwrap();
    }
    s
}

pub fn ccdf_csv(points: &[CcdfPoint]) -> String {
    let mut s = String::from("mct_us,ccdf\n");
    for p in points {
        writeln!(s, "{},{:.6}", p.value, p.fraction).unwrap();
    }
    s
}

pub fn throughput_csv(bins: &[ThroughputBin]) -> String {
    let mut s = String::from("bin_start_us,total_bytes,priority_bytes\n");
    for b in bins {
        writeln!(s, "{},{},{}", b.bin_start, b.total_bytes, b.priority_bytes).unwrap();
    }
    s
}

/// Paths without a usable growth figure are written with an empty value.
pub fn growth_csv(rows: &[(usize, String, Option<f64>)]) -> String {
    let mut s = String::from("path_id,scheduler,mean_growth_bytes_per_rtt\n");
    for (path, sched, g) in rows {
        match g {
            Some(g) => writeln!(s, "{path},{sched},{g:.1}").unwrap(),
            None => writeln!(s, "{path},{sched},").unwrap(),
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ccdf_of_three_values() {
        let c = ccdf(&[30, 10, 20]);
        let pts: Vec<(Micros, f64)> = c.iter().map(|p| (p.value, p.fraction)).collect();
        assert_eq!(pts.len(), 3);
        assert_eq!(pts[0].0, 10);
        assert!((pts[0].1 - 2.0 / 3.0).abs() < 1e-12);
        assert!((pts[1].1 - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(pts[2], (30, 0.0));
    }

    #[test]
    fn ccdf_all_equal_and_empty() {
        assert_eq!(
            ccdf(&[5, 5, 5]),
            vec![CcdfPoint {
                value: 5,
                fraction: 0.0
            }]
        );
        assert!(ccdf(&[]).is_empty());
    }

    #[test]
    fn distance_between_shifted_samples() {
        assert_eq!(ccdf_distance(&[1, 2, 3], &[1, 2, 3]), 0.0);
        assert!((ccdf_distance(&[1, 2, 3, 4], &[1, 2, 3, 10]) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn empty_bins_are_zero() {
        let trace = [DeliveredPacket {
            time: 250,
            size: 1350,
            priority: true,
        }];
        let bins = throughput_series(&trace, 0, 400, 100);
        assert_eq!(bins.len(), 4);
        assert_eq!(bins[0].total_bytes, 0);
        assert_eq!(bins[2].total_bytes, 1350);
        assert_eq!(bins[2].priority_bytes, 1350);
        assert_eq!(bins[3].total_bytes, 0);
    }

    fn linear_history(per_rtt: u64, rtt: Micros, rtts: u64) -> CwndHistory {
        let mut h = CwndHistory {
            ca_since: Some(0),
            ..Default::default()
        };
        // one sample per tenth of an RTT
        for k in 0..=rtts * 10 {
            h.samples.push((k * rtt / 10, 100_000 + k * per_rtt / 10));
        }
        h
    }

    #[test]
    fn linear_growth_is_recovered() {
        let h = linear_history(1350, 50_000, 40);
        let r = cwnd_growth_ca(&h, 0, "lowrtt", 50_000, 0, 40 * 50_000, None).unwrap();
        assert_eq!(r.windows, 40);
        assert!((r.mean_growth - 1350.0).abs() < 1e-9);
    }

    #[test]
    fn decrease_windows_are_excluded() {
        let mut h = linear_history(1350, 50_000, 40);
        h.decreases.push(125_000);
        let r = cwnd_growth_ca(&h, 0, "cwr", 50_000, 0, 40 * 50_000, None).unwrap();
        assert_eq!(r.excluded_decrease, 1);
        assert_eq!(r.windows, 39);
    }

    #[test]
    fn too_few_windows_is_an_error() {
        let h = linear_history(1350, 50_000, 10);
        let e = cwnd_growth_ca(&h, 1, "cwr", 50_000, 0, 10 * 50_000, None).unwrap_err();
        assert!(matches!(
            e,
            MetricsError::InsufficientGrowthSamples {
                path_id: 1,
                windows: 10,
                ..
            }
        ));
    }

    #[test]
    fn idle_path_has_zero_growth() {
        let h = CwndHistory {
            samples: vec![(0, 13_500)],
            ..Default::default()
        };
        let r = cwnd_growth_ca(&h, 0, "lowrtt", 50_000, 0, 2_000_000, None).unwrap();
        assert_eq!(r.mean_growth, 0.0);
    }

    #[test]
    fn csv_headers() {
        assert!(mct_csv(&[])
            .starts_with("source_id,message_id,generated_at_us,mct_us,loss_involved,duplicated\n"));
        assert_eq!(ccdf_csv(&[]), "mct_us,ccdf\n");
        assert_eq!(
            throughput_csv(&[]),
            "bin_start_us,total_bytes,priority_bytes\n"
        );
        assert_eq!(
            growth_csv(&[(0, "cwr".into(), Some(1264.04))]),
            "path_id,scheduler,mean_growth_bytes_per_rtt\n0,cwr,1264.0\n"
        );
    }
}
