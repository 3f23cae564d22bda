//! Benchmark harness for the `gpscale` approximations: scenario files, tier
//! presets, timed task execution and CSV records.

pub mod commands;
pub mod config;
pub mod record;
pub mod runner;
pub mod tiers;

pub use config::{Command, ConfigError, DataSource, MethodKind, Scenario, Task};
pub use record::{BenchmarkRecord, CsvSink, HEADER};
pub use runner::{run_scenario, RunError, RunSummary};
pub use tiers::{tier_preset, TierSet};
