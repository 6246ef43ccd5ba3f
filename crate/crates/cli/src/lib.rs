//! Key-value store microbenchmarks over the bdaheap runtime: a read-only
//! get workload, an in-memory map-reduce, and an allocation stress test,
//! each runnable in base or bda mode for paired comparisons.

pub mod args;
pub mod config;
pub mod kv;
pub mod report;
pub mod workloads;

pub use args::Cli;
pub use config::{CliError, RunConfig, WorkloadKind, WorkloadSpec};
pub use kv::{Kv, Table, ROW_CLASS};
pub use report::{
    write_report, AllocTiming, GcSummary, LatencyStats, MetricsReport, SnapshotMetrics,
};
pub use workloads::run;
