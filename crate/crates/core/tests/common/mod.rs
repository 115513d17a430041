//! Random small scenarios shared by the property suites.

use cwrsim::{PathSchedulerKind, ScenarioConfig, StreamSchedulerKind, MICROS_PER_MS};
use proptest::prelude::*;

pub fn path_kind() -> impl Strategy<Value = PathSchedulerKind> {
    prop_oneof![
        Just(PathSchedulerKind::LowRtt),
        Just(PathSchedulerKind::Cwr),
        Just(PathSchedulerKind::CwrRed),
    ]
}

pub fn stream_kind() -> impl Strategy<Value = StreamSchedulerKind> {
    prop_oneof![
        Just(StreamSchedulerKind::RoundRobin),
        Just(StreamSchedulerKind::PriorityFifo),
    ]
}

prop_compose! {
    pub fn scenario(min_sources: usize)(
        path_scheduler in path_kind(),
        stream_scheduler in stream_kind(),
        owds in prop::collection::vec((2u64..60, 0.0f64..0.03), 1..=2),
        sources in prop::collection::vec((20u64..150, 1u64..40_000, prop::bool::weighted(0.8)), min_sources..=3),
        background in any::<bool>(),
        duration_ms in 500u64..=2_000,
        seed in any::<u64>(),
    ) -> ScenarioConfig {
        let mut cfg = ScenarioConfig::new(path_scheduler, duration_ms * MICROS_PER_MS);
        cfg.stream_scheduler = stream_scheduler;
        cfg.background = background;
        cfg.seed = seed;
        cfg.warmup = 0;
        for (owd, loss) in owds {
            cfg = cfg.with_path(owd * MICROS_PER_MS, 100_000_000, loss);
        }
        for (ia, size, priority) in sources {
            cfg = cfg.with_source(ia * MICROS_PER_MS, size, priority);
        }
        cfg
    }
}
