//! Deterministic discrete-event simulator of a two-path, stream-multiplexed
//! transport with congestion window reservation for periodic priority messages.
//!
//! ```no_run
//! use cwrsim::{ScenarioConfig, SimOptions, Simulation};
//!
//! let cfg = ScenarioConfig::load("scenario.conf".as_ref()).unwrap();
//! let run = Simulation::run_scenario(&cfg, SimOptions::default()).unwrap();
//! println!("{} priority messages", run.mct.len());
//! ```

pub mod audit;
pub mod config;
pub mod connection;
pub mod engine;
pub mod error;
pub mod metrics;
pub mod net_path;
pub mod output;
pub mod rng;
pub mod scenarios;
pub mod schedulers;
pub mod sim;
pub mod traffic;
pub mod transport;

pub use config::{ForcedDrop, ScenarioConfig};
pub use engine::{EventQueue, Micros, MICROS_PER_MS, MICROS_PER_SEC};
pub use error::{ConfigError, MetricsError, OutputError, SimError};
pub use net_path::PathConfig;
pub use schedulers::{PathSchedulerKind, StreamSchedulerKind};
pub use sim::{RunOutput, SimOptions, Simulation};
pub use traffic::DataSourceConfig;
