//! Whole-simulation properties over small random scenarios.
//!
//! Window conservation and reservation admission are asserted on every event in strict
//! mode, so a strict run returning `Ok` is the check for those two.

mod common;

use common::scenario;
use cwrsim::audit;
use cwrsim::{
    PathSchedulerKind, RunOutput, ScenarioConfig, SimError, SimOptions, Simulation,
    StreamSchedulerKind,
};
use proptest::prelude::*;

const STRICT: SimOptions = SimOptions {
    strict: true,
    trace: true,
};

fn strict_run(cfg: &ScenarioConfig) -> Result<RunOutput, SimError> {
    Simulation::run_scenario(cfg, STRICT)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn bytes_in_flight_conserved(cfg in scenario(0)) {
        let out = strict_run(&cfg);
        prop_assert!(out.is_ok(), "{:?}", out.err());
    }

    #[test]
    fn reservation_admission_is_safe(mut cfg in scenario(1)) {
        cfg.background = true;
        if cfg.path_scheduler == PathSchedulerKind::LowRtt {
            cfg.path_scheduler = PathSchedulerKind::Cwr;
        }
        let out = strict_run(&cfg);
        prop_assert!(out.is_ok(), "{:?}", out.err());
    }

    #[test]
    fn one_message_per_stream(cfg in scenario(1)) {
        let out = strict_run(&cfg).unwrap();
        prop_assert_eq!(audit::one_message_per_stream(&out), Ok(()));
    }

    #[test]
    fn priority_fifo_ordering(mut cfg in scenario(1)) {
        cfg.stream_scheduler = StreamSchedulerKind::PriorityFifo;
        cfg.background = true;
        let out = strict_run(&cfg).unwrap();
        prop_assert_eq!(audit::priority_fifo_order(&out), Ok(()));
    }

    #[test]
    fn no_late_duplication(mut cfg in scenario(1)) {
        cfg.path_scheduler = PathSchedulerKind::CwrRed;
        let out = strict_run(&cfg).unwrap();
        prop_assert_eq!(audit::no_late_duplication(&out), Ok(()));
    }

    #[test]
    fn same_seed_same_run(cfg in scenario(0)) {
        let a = Simulation::run_scenario(&cfg, SimOptions::default()).unwrap();
        let b = Simulation::run_scenario(&cfg, SimOptions::default()).unwrap();
        prop_assert_eq!(a.summary.dispatch_digest, b.summary.dispatch_digest);
        prop_assert_eq!(a.mct, b.mct);
        prop_assert_eq!(a.throughput, b.throughput);
    }
}
