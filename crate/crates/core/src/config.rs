//! Scenario files.
//!
//! A scenario is a plain `key = value` file. Top-level keys come first; each `[path]`,
//! `[source]` or `[drop]` header opens a new entry of that kind. `#` starts a comment.
//!
//! ```text
//! duration = 30
//! path_scheduler = cwr
//! stream_scheduler = pfifo
//! background = true
//!
//! [path]
//! owd_ms = 12.5
//! rate_mbps = 100
//! loss_rate = 0.0005
//!
//! [source]
//! inter_arrival_ms = 100
//! message_size = 10000
//! ```

use std::path::Path;

use serde::Serialize;

use crate::engine::{Micros, MICROS_PER_MS};
use crate::error::ConfigError;
use crate::net_path::PathConfig;
use crate::schedulers::{PathSchedulerKind, StreamSchedulerKind};
use crate::traffic::DataSourceConfig;
use crate::transport::MessageId;

pub const DEFAULT_WARMUP: Micros = 1_000_000;
pub const DEFAULT_START_OFFSET: Micros = 200 * MICROS_PER_MS;
pub const DEFAULT_THROUGHPUT_BIN: Micros = 100 * MICROS_PER_MS;

/// Drop the first transmission of one packet of one message.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ForcedDrop {
    pub message: MessageId,
    /// Packet index within the message, counting from zero.
    pub packet: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScenarioConfig {
    pub duration: Micros,
    pub warmup: Micros,
    pub seed: u64,
    pub background: bool,
    pub stream_scheduler: StreamSchedulerKind,
    pub path_scheduler: PathSchedulerKind,
    pub paths: Vec<PathConfig>,
    pub sources: Vec<DataSourceConfig>,
    pub forced_drops: Vec<ForcedDrop>,
    pub throughput_bin: Micros,
    pub output_dir: Option<String>,
}

impl ScenarioConfig {
    pub fn new(path_scheduler: PathSchedulerKind, duration: Micros) -> Self {
        Self {
            duration,
            warmup: DEFAULT_WARMUP,
            seed: 1,
            background: true,
            stream_scheduler: StreamSchedulerKind::PriorityFifo,
            path_scheduler,
            paths: Vec::new(),
            sources: Vec::new(),
            forced_drops: Vec::new(),
            throughput_bin: DEFAULT_THROUGHPUT_BIN,
            output_dir: None,
        }
    }

    pub fn with_path(mut self, owd: Micros, rate: u64, loss_rate: f64) -> Self {
        let id = self.paths.len();
        self.paths.push(PathConfig::new(id, owd, rate, loss_rate));
        self
    }

    pub fn with_source(mut self, inter_arrival: Micros, message_size: u64, priority: bool) -> Self {
        let id = self.sources.len();
        self.sources.push(DataSourceConfig {
            source_id: id,
            inter_arrival,
            message_size,
            priority,
            start_offset: DEFAULT_START_OFFSET,
        });
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Validation(m));
        if self.duration == 0 {
            return invalid("duration must be > 0".into());
        }
        if self.warmup >= self.duration {
            return invalid(format!(
                "warmup {} us must be shorter than duration {} us",
                self.warmup, self.duration
            ));
        }
        if self.paths.is_empty() {
            return invalid("at least one [path] is required".into());
        }
        if self.throughput_bin == 0 {
            return invalid("throughput_bin_ms must be > 0".into());
        }
        for p in &self.paths {
            p.validate().map_err(ConfigError::Validation)?;
        }
        for s in &self.sources {
            s.validate().map_err(ConfigError::Validation)?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Parser::default().run(text)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Section {
    Top,
    Path,
    Source,
    Drop,
}

impl Section {
    fn name(self) -> &'static str {
        match self {
            Section::Top => "top level",
            Section::Path => "path",
            Section::Source => "source",
            Section::Drop => "drop",
        }
    }
}

/// Key/value pairs of one section, in file order.
struct Entry {
    section: Section,
    line: usize,
    pairs: Vec<(usize, String, String)>,
}

impl Entry {
    fn take(&mut self, key: &str) -> Option<(usize, String)> {
        let i = self.pairs.iter().position(|(_, k, _)| k == key)?;
        let (line, _, v) = self.pairs.remove(i);
        Some((line, v))
    }

    fn require(&mut self, key: &str) -> Result<(usize, String), ConfigError> {
        self.take(key).ok_or_else(|| ConfigError::MissingKey {
            line: self.line,
            section: self.section.name().into(),
            key: key.into(),
        })
    }

    fn finish(self) -> Result<(), ConfigError> {
        match self.pairs.into_iter().next() {
            Some((line, key, _)) => Err(ConfigError::UnknownKey {
                line,
                section: self.section.name().into(),
                key,
            }),
            None => Ok(()),
        }
    }
}

#[derive(Default)]
struct Parser {
    entries: Vec<Entry>,
}

fn invalid(line: usize, key: &str, value: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError::InvalidValue {
        line,
        key: key.into(),
        value: value.into(),
        msg: msg.into(),
    }
}

/// Parse a non-negative decimal and scale it by `10^digits`, exactly.
fn parse_scaled(value: &str, digits: u32) -> Option<u64> {
    let (int, frac) = value.split_once('.').unwrap_or((value, ""));
    if int.is_empty() && frac.is_empty() {
        return None;
    }
    let all_digits = |s: &str| s.bytes().all(|b| b.is_ascii_digit());
    if !all_digits(int) || !all_digits(frac) {
        return None;
    }
    let int: u64 = if int.is_empty() { 0 } else { int.parse().ok()? };
    let frac = frac.trim_end_matches('0');
    if frac.len() > digits as usize {
        return None;
    }
    let frac_val: u64 = if frac.is_empty() {
        0
    } else {
        frac.parse().ok()?
    };
    let scale = 10u64.pow(digits);
    let frac_scaled = frac_val * 10u64.pow(digits - frac.len() as u32);
    int.checked_mul(scale)?.checked_add(frac_scaled)
}

fn parse_u64(line: usize, key: &str, v: &str) -> Result<u64, ConfigError> {
    v.parse()
        .map_err(|_| invalid(line, key, v, "expected a non-negative integer"))
}

fn parse_bool(line: usize, key: &str, v: &str) -> Result<bool, ConfigError> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(invalid(line, key, v, "expected true or false")),
    }
}

fn parse_seconds(line: usize, key: &str, v: &str) -> Result<Micros, ConfigError> {
    parse_scaled(v, 6).ok_or_else(|| invalid(line, key, v, "expected seconds, at most 6 decimals"))
}

fn parse_millis(line: usize, key: &str, v: &str) -> Result<Micros, ConfigError> {
    parse_scaled(v, 3)
        .ok_or_else(|| invalid(line, key, v, "expected milliseconds, at most 3 decimals"))
}

impl Parser {
    fn run(mut self, text: &str) -> Result<ScenarioConfig, ConfigError> {
        self.entries.push(Entry {
            section: Section::Top,
            line: 1,
            pairs: Vec::new(),
        });
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(rest) = content.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| ConfigError::Syntax {
                    line,
                    msg: format!("unterminated section header `{content}`"),
                })?;
                let section = match name.trim() {
                    "path" => Section::Path,
                    "source" => Section::Source,
                    "drop" => Section::Drop,
                    other => {
                        return Err(ConfigError::Syntax {
                            line,
                            msg: format!("unknown section `[{other}]`"),
                        })
                    }
                };
                self.entries.push(Entry {
                    section,
                    line,
                    pairs: Vec::new(),
                });
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line,
                msg: format!("expected `key = value`, found `{content}`"),
            })?;
            let key = key.trim();
            let value = value.trim().trim_matches('"');
            if key.is_empty() {
                return Err(ConfigError::Syntax {
                    line,
                    msg: "empty key".into(),
                });
            }
            let entry = self.entries.last_mut().expect("top entry exists");
            if entry.pairs.iter().any(|(_, k, _)| k == key) {
                return Err(ConfigError::Syntax {
                    line,
                    msg: format!("duplicate key `{key}`"),
                });
            }
            entry.pairs.push((line, key.to_string(), value.to_string()));
        }

        let mut entries = self.entries.into_iter();
        let mut top = entries.next().expect("top entry exists");
        let (line, v) = top.require("duration")?;
        let duration = parse_seconds(line, "duration", &v)?;
        let (line, v) = top.require("path_scheduler")?;
        let path_scheduler: PathSchedulerKind = v
            .parse()
            .map_err(|e: String| invalid(line, "path_scheduler", &v, e))?;
        let mut cfg = ScenarioConfig::new(path_scheduler, duration);
        if let Some((line, v)) = top.take("stream_scheduler") {
            cfg.stream_scheduler = v
                .parse()
                .map_err(|e: String| invalid(line, "stream_scheduler", &v, e))?;
        }
        if let Some((line, v)) = top.take("seed") {
            cfg.seed = parse_u64(line, "seed", &v)?;
        }
        if let Some((line, v)) = top.take("background") {
            cfg.background = parse_bool(line, "background", &v)?;
        }
        if let Some((line, v)) = top.take("warmup") {
            cfg.warmup = parse_seconds(line, "warmup", &v)?;
        }
        if let Some((line, v)) = top.take("throughput_bin_ms") {
            cfg.throughput_bin = parse_millis(line, "throughput_bin_ms", &v)?;
        }
        if let Some((_, v)) = top.take("output_dir") {
            cfg.output_dir = Some(v);
        }
        top.finish()?;

        for mut e in entries {
            match e.section {
                Section::Path => {
                    let (line, v) = e.require("owd_ms")?;
                    let owd = parse_millis(line, "owd_ms", &v)?;
                    let (line, v) = e.require("rate_mbps")?;
                    let rate = parse_scaled(&v, 6)
                        .ok_or_else(|| invalid(line, "rate_mbps", &v, "expected Mbit/s"))?;
                    let (line, v) = e.require("loss_rate")?;
                    let loss: f64 = v
                        .parse()
                        .map_err(|_| invalid(line, "loss_rate", &v, "expected a probability"))?;
                    let mut p = PathConfig::new(cfg.paths.len(), owd, rate, loss);
                    if let Some((line, v)) = e.take("ack_loss") {
                        p.ack_loss_enabled = parse_bool(line, "ack_loss", &v)?;
                    }
                    if let Some((line, v)) = e.take("max_cwnd") {
                        p.max_cwnd = Some(parse_u64(line, "max_cwnd", &v)?);
                    }
                    cfg.paths.push(p);
                }
                Section::Source => {
                    let (line, v) = e.require("inter_arrival_ms")?;
                    let inter_arrival = parse_millis(line, "inter_arrival_ms", &v)?;
                    let (line, v) = e.require("message_size")?;
                    let message_size = parse_u64(line, "message_size", &v)?;
                    let priority = match e.take("priority") {
                        Some((line, v)) => parse_bool(line, "priority", &v)?,
                        None => true,
                    };
                    let start_offset = match e.take("start_offset_ms") {
                        Some((line, v)) => parse_millis(line, "start_offset_ms", &v)?,
                        None => DEFAULT_START_OFFSET,
                    };
                    cfg.sources.push(DataSourceConfig {
                        source_id: cfg.sources.len(),
                        inter_arrival,
                        message_size,
                        priority,
                        start_offset,
                    });
                }
                Section::Drop => {
                    let (line, v) = e.require("message")?;
                    let message = parse_u64(line, "message", &v)?;
                    let (line, v) = e.require("packet")?;
                    let packet = parse_u64(line, "packet", &v)?;
                    cfg.forced_drops.push(ForcedDrop { message, packet });
                }
                Section::Top => unreachable!("only the first entry is top level"),
            }
            e.finish()?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = "\
duration = 30
path_scheduler = cwr_red
seed = 7

[path]
owd_ms = 12.5
rate_mbps = 100
loss_rate = 0.0005

[path]
owd_ms = 25
rate_mbps = 100
loss_rate = 0.0005
ack_loss = true

[source]
inter_arrival_ms = 100
message_size = 10000
";

    #[test]
    fn parses_basic_scenario() {
        let cfg = ScenarioConfig::parse(BASIC).unwrap();
        assert_eq!(cfg.duration, 30_000_000);
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.path_scheduler, PathSchedulerKind::CwrRed);
        assert_eq!(cfg.stream_scheduler, StreamSchedulerKind::PriorityFifo);
        assert_eq!(cfg.paths.len(), 2);
        assert_eq!(cfg.paths[0].owd, 12_500);
        assert_eq!(cfg.paths[0].rate, 100_000_000);
        assert_eq!(cfg.paths[1].path_id, 1);
        assert!(cfg.paths[1].ack_loss_enabled);
        assert_eq!(cfg.sources[0].inter_arrival, 100_000);
        assert_eq!(cfg.sources[0].start_offset, DEFAULT_START_OFFSET);
        assert!(cfg.sources[0].priority);
    }

    #[test]
    fn scaled_decimals_are_exact() {
        assert_eq!(parse_scaled("12.5", 3), Some(12_500));
        assert_eq!(parse_scaled("0.001", 3), Some(1));
        assert_eq!(parse_scaled("0.0001", 3), None);
        assert_eq!(parse_scaled("7.50", 1), Some(75));
        assert_eq!(parse_scaled("-1", 3), None);
        assert_eq!(parse_scaled(".", 3), None);
    }

    #[test]
    fn unknown_key_reports_line() {
        let text = BASIC.replace("seed = 7", "sede = 7");
        match ScenarioConfig::parse(&text) {
            Err(ConfigError::UnknownKey { line, key, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(key, "sede");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_key_reports_section() {
        let text = BASIC.replace("loss_rate = 0.0005\nack_loss", "ack_loss");
        match ScenarioConfig::parse(&text) {
            Err(ConfigError::MissingKey { section, key, line }) => {
                assert_eq!(section, "path");
                assert_eq!(key, "loss_rate");
                assert_eq!(line, 10);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_values_and_syntax() {
        let text = BASIC.replace("owd_ms = 25", "owd_ms = fast");
        assert!(matches!(
            ScenarioConfig::parse(&text),
            Err(ConfigError::InvalidValue { line: 11, .. })
        ));
        let text = BASIC.replace("[source]", "[source");
        assert!(matches!(
            ScenarioConfig::parse(&text),
            Err(ConfigError::Syntax { line: 16, .. })
        ));
        let text = BASIC.replace("path_scheduler = cwr_red", "path_scheduler = fastest");
        assert!(matches!(
            ScenarioConfig::parse(&text),
            Err(ConfigError::InvalidValue { line: 2, .. })
        ));
    }

    #[test]
    fn validation_rejects_bad_probability() {
        let text = BASIC.replacen("loss_rate = 0.0005", "loss_rate = 1.5", 1);
        assert!(matches!(
            ScenarioConfig::parse(&text),
            Err(ConfigError::Validation(_))
        ));
    }

    #[test]
    fn drop_section() {
        let text = format!("{BASIC}\n[drop]\nmessage = 12\npacket = 7\n");
        let cfg = ScenarioConfig::parse(&text).unwrap();
        assert_eq!(
            cfg.forced_drops,
            vec![ForcedDrop {
                message: 12,
                packet: 7
            }]
        );
    }
}
