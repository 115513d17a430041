//! Run directories: per-run CSVs and manifest, repetitions and the comparison report.
//!
//! ```text
//! OUT/
//!   run_000/ mct.csv ccdf.csv throughput.csv cwnd_growth.csv manifest.json
//!   run_001/ ...
//!   ccdf_pooled.csv
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::config::ScenarioConfig;
use crate::engine::Micros;
use crate::error::{OutputError, SimError};
use crate::metrics::{ccdf, ccdf_csv, fraction_above, growth_csv, mct_csv, throughput_csv};
use crate::sim::{RunOutput, RunSummary, SimOptions, Simulation};

#[derive(Serialize)]
pub struct RunManifest<'a> {
    pub config: &'a ScenarioConfig,
    pub summary: &'a RunSummary,
}

pub fn growth_rows(run: &RunOutput) -> Vec<(usize, String, Option<f64>)> {
    run.config
        .paths
        .iter()
        .zip(&run.growth)
        .map(|(p, g)| {
            (
                p.path_id,
                run.config.path_scheduler.name().to_string(),
                g.as_ref().ok().map(|r| r.mean_growth),
            )
        })
        .collect()
}

/// Write one run's files into `dir`.
pub fn write_run(dir: &Path, run: &RunOutput) -> Result<(), OutputError> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("mct.csv"), mct_csv(&run.mct))?;
    fs::write(dir.join("ccdf.csv"), ccdf_csv(&ccdf(&run.priority_mcts())))?;
    fs::write(dir.join("throughput.csv"), throughput_csv(&run.throughput))?;
    fs::write(dir.join("cwnd_growth.csv"), growth_csv(&growth_rows(run)))?;
    let manifest = RunManifest {
        config: &run.config,
        summary: &run.summary,
    };
    let mut json = serde_json::to_string_pretty(&manifest)?;
    json.push('\n');
    fs::write(dir.join("manifest.json"), json)?;
    Ok(())
}

/// `reps` runs with seeds `cfg.seed`, `cfg.seed + 1`, ..., in parallel.
pub fn run_repetitions(
    cfg: &ScenarioConfig,
    reps: u64,
    options: SimOptions,
) -> Result<Vec<RunOutput>, SimError> {
    (0..reps)
        .into_par_iter()
        .map(|i| {
            let mut c = cfg.clone();
            c.seed = cfg.seed.wrapping_add(i);
            Simulation::run_scenario(&c, options)
        })
        .collect()
}

/// Run and write every repetition plus the pooled CCDF. Returns the run directories.
pub fn simulate_to_dir(
    cfg: &ScenarioConfig,
    reps: u64,
    out: &Path,
) -> Result<Vec<PathBuf>, OutputError> {
    let runs = run_repetitions(cfg, reps, SimOptions::default())?;
    fs::create_dir_all(out)?;
    let mut dirs = Vec::new();
    let mut pooled = Vec::new();
    for (i, run) in runs.iter().enumerate() {
        let dir = out.join(format!("run_{i:03}"));
        write_run(&dir, run)?;
        pooled.extend(run.priority_mcts());
        dirs.push(dir);
    }
    fs::write(out.join("ccdf_pooled.csv"), ccdf_csv(&ccdf(&pooled)))?;
    Ok(dirs)
}

/// What the comparison needs from one run directory.
#[derive(Clone, Debug, PartialEq)]
pub struct RunDigest {
    pub dir: PathBuf,
    pub scheduler: String,
    pub seed: u64,
    pub growth: Vec<(usize, Option<f64>)>,
    pub mcts: Vec<Micros>,
    pub total_bytes: u64,
    pub priority_bytes: u64,
    pub rtt_nominal: Micros,
}

fn malformed(path: &Path, msg: impl Into<String>) -> OutputError {
    OutputError::Malformed {
        path: path.display().to_string(),
        msg: msg.into(),
    }
}

/// Rows of a CSV file after checking its header.
fn csv_rows(path: &Path, header: &str) -> Result<Vec<Vec<String>>, OutputError> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    if lines.next() != Some(header) {
        return Err(malformed(path, format!("expected header `{header}`")));
    }
    let width = header.split(',').count();
    lines
        .map(|l| {
            let cols: Vec<String> = l.split(',').map(str::to_string).collect();
            if cols.len() == width {
                Ok(cols)
            } else {
                Err(malformed(path, format!("bad row `{l}`")))
            }
        })
        .collect()
}

fn num<T: std::str::FromStr>(path: &Path, s: &str) -> Result<T, OutputError> {
    s.parse()
        .map_err(|_| malformed(path, format!("bad number `{s}`")))
}

pub fn read_run(dir: &Path) -> Result<RunDigest, OutputError> {
    let manifest_path = dir.join("manifest.json");
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(&manifest_path)?)?;
    let scheduler = manifest["config"]["path_scheduler"]
        .as_str()
        .ok_or_else(|| malformed(&manifest_path, "missing config.path_scheduler"))?
        .to_string();
    let seed = manifest["config"]["seed"]
        .as_u64()
        .ok_or_else(|| malformed(&manifest_path, "missing config.seed"))?;
    let rtt_nominal = manifest["config"]["paths"][0]["owd"]
        .as_u64()
        .ok_or_else(|| malformed(&manifest_path, "missing config.paths"))?
        * 2;

    let p = dir.join("cwnd_growth.csv");
    let growth = csv_rows(&p, "path_id,scheduler,mean_growth_bytes_per_rtt")?
        .into_iter()
        .map(|r| {
            let g = if r[2].is_empty() {
                None
            } else {
                Some(num(&p, &r[2])?)
            };
            Ok((num(&p, &r[0])?, g))
        })
        .collect::<Result<_, OutputError>>()?;

    let p = dir.join("mct.csv");
    let mcts = csv_rows(
        &p,
        "source_id,message_id,generated_at_us,mct_us,loss_involved,duplicated",
    )?
    .into_iter()
    .map(|r| num(&p, &r[3]))
    .collect::<Result<_, _>>()?;

    let p = dir.join("throughput.csv");
    let (mut total_bytes, mut priority_bytes) = (0u64, 0u64);
    for r in csv_rows(&p, "bin_start_us,total_bytes,priority_bytes")? {
        total_bytes += num::<u64>(&p, &r[1])?;
        priority_bytes += num::<u64>(&p, &r[2])?;
    }
    Ok(RunDigest {
        dir: dir.to_path_buf(),
        scheduler,
        seed,
        growth,
        mcts,
        total_bytes,
        priority_bytes,
        rtt_nominal,
    })
}

/// Run directories under `dir`: itself if it holds a manifest, else its `run_*` children.
pub fn discover_runs(dir: &Path) -> Result<Vec<PathBuf>, OutputError> {
    if dir.join("manifest.json").is_file() {
        return Ok(vec![dir.to_path_buf()]);
    }
    let mut runs: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("manifest.json").is_file())
        .collect();
    runs.sort();
    if runs.is_empty() {
        return Err(malformed(dir, "no run directories found"));
    }
    Ok(runs)
}

const ORDER: [&str; 3] = ["lowrtt", "cwr", "cwr_red"];

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SchedulerAggregate {
    pub runs: usize,
    /// Mean growth per path over runs that produced a figure.
    pub growth: BTreeMap<usize, f64>,
    pub mcts: Vec<Micros>,
    pub total_bytes: u64,
    pub priority_bytes: u64,
    pub rtt_nominal: Micros,
}

/// Per path: sum of growth values and how many runs had one.
type GrowthSums = BTreeMap<usize, (f64, usize)>;

pub fn aggregate(digests: &[RunDigest]) -> BTreeMap<String, SchedulerAggregate> {
    let mut sums: BTreeMap<String, (SchedulerAggregate, GrowthSums)> = BTreeMap::new();
    for d in digests {
        let (agg, g) = sums.entry(d.scheduler.clone()).or_default();
        agg.runs += 1;
        agg.mcts.extend(&d.mcts);
        agg.total_bytes += d.total_bytes;
        agg.priority_bytes += d.priority_bytes;
        agg.rtt_nominal = d.rtt_nominal;
        for &(path, v) in &d.growth {
            if let Some(v) = v {
                let e = g.entry(path).or_default();
                e.0 += v;
                e.1 += 1;
            }
        }
    }
    sums.into_iter()
        .map(|(k, (mut agg, g))| {
            agg.growth = g.into_iter().map(|(p, (s, n))| (p, s / n as f64)).collect();
            (k, agg)
        })
        .collect()
}

/// Text comparison of schedulers across run directories.
pub fn compare_report(dirs: &[PathBuf]) -> Result<String, OutputError> {
    let mut digests = Vec::new();
    for d in dirs {
        for run in discover_runs(d)? {
            digests.push(read_run(&run)?);
        }
    }
    let agg = aggregate(&digests);
    let mut names: Vec<&String> = agg.keys().collect();
    names.sort_by_key(|n| ORDER.iter().position(|o| o == n).unwrap_or(ORDER.len()));

    let mut s = String::new();
    writeln!(s, "runs: {}", digests.len()).unwrap();
    writeln!(
        s,
        "{:<10} {:>5} {:>10} {:>10} {:>10} {:>10} {:>12}",
        "scheduler", "runs", "messages", "p50_ms", "p99_ms", ">1rtt", "prio_share"
    )
    .unwrap();
    for name in &names {
        let a = &agg[*name];
        let mut m = a.mcts.clone();
        m.sort_unstable();
        let q = |f: f64| -> f64 {
            if m.is_empty() {
                return f64::NAN;
            }
            let i = ((m.len() as f64 * f).ceil() as usize).clamp(1, m.len()) - 1;
            m[i] as f64 / 1000.0
        };
        let share = if a.total_bytes > 0 {
            a.priority_bytes as f64 / a.total_bytes as f64
        } else {
            0.0
        };
        writeln!(
            s,
            "{:<10} {:>5} {:>10} {:>10.2} {:>10.2} {:>10.4} {:>12.4}",
            name,
            a.runs,
            m.len(),
            q(0.5),
            q(0.99),
            fraction_above(&m, a.rtt_nominal),
            share
        )
        .unwrap();
    }

    writeln!(s).unwrap();
    writeln!(s, "mean congestion-avoidance growth (B/RTT)").unwrap();
    let paths: std::collections::BTreeSet<usize> = agg
        .values()
        .flat_map(|a| a.growth.keys().copied())
        .collect();
    for name in &names {
        let a = &agg[*name];
        let cols: Vec<String> = paths
            .iter()
            .map(|p| match a.growth.get(p) {
                Some(g) => format!("path{p}={g:.1}"),
                None => format!("path{p}=n/a"),
            })
            .collect();
        writeln!(s, "{:<10} {}", name, cols.join(" ")).unwrap();
    }
    let present: Vec<&str> = ORDER
        .iter()
        .copied()
        .filter(|o| agg.contains_key(*o))
        .collect();
    if present.len() >= 2 {
        for p in &paths {
            let vals: Vec<Option<f64>> = present
                .iter()
                .map(|n| agg[*n].growth.get(p).copied())
                .collect();
            let verdict = if vals.iter().any(Option::is_none) {
                "incomplete".to_string()
            } else {
                let v: Vec<f64> = vals.into_iter().flatten().collect();
                if v.windows(2).all(|w| w[0] >= w[1]) {
                    "holds".to_string()
                } else {
                    "violated".to_string()
                }
            };
            writeln!(
                s,
                "growth ordering {} on path {}: {}",
                present.join(" >= "),
                p,
                verdict
            )
            .unwrap();
        }
    }
    if let (Some(c), Some(r)) = (agg.get("cwr"), agg.get("cwr_red")) {
        if c.priority_bytes > 0 {
            writeln!(
                s,
                "priority bytes cwr_red/cwr: {:.3}",
                r.priority_bytes as f64 / c.priority_bytes as f64
            )
            .unwrap();
        }
    }
    Ok(s)
}
