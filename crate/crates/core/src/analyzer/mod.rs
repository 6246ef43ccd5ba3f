//! Locality analysis over heap snapshots: subgraph coloring, objects per
//! page, reference distance, and an LRU page-cache fault simulator.
//!
//! Everything here is a pure function of an immutable snapshot, so analyses
//! may run in parallel.

mod lru;
mod metrics;
mod snapshot;

pub use lru::{simulate_page_faults, PageCache};
pub use metrics::{color_subgraphs, mean_reference_distance, objects_per_page, pages_per_color};
pub use snapshot::{
    read_snapshot, take_snapshot, write_snapshot, HeapSnapshot, Record, SNAPSHOT_HEADER,
};

use thiserror::Error;

/// Simulated page size; equal to the compaction region size.
pub const PAGE_BYTES: u64 = 4096;

#[derive(Debug, Error)]
pub enum AnalyzerError {
    #[error("root {0:#x} is not in the snapshot")]
    UnknownRoot(u64),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Heap(#[from] crate::GcError),
}
