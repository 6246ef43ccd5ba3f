use std::fmt;

use bdaheap::{GcError, HeapConfig, Mode};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum WorkloadKind {
    Readonly,
    Mapreduce,
    Allocstress,
}

impl fmt::Display for WorkloadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WorkloadKind::Readonly => "readonly",
            WorkloadKind::Mapreduce => "mapreduce",
            WorkloadKind::Allocstress => "allocstress",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WorkloadSpec {
    pub kind: WorkloadKind,
    /// Key-value pairs across all tables.
    pub entries: u64,
    /// Gets per thread (readonly) or allocations per repetition (allocstress).
    pub operations: u64,
    /// Mutator threads, each owning one table. Threads are interleaved on a
    /// single mutator.
    pub threads: usize,
    pub value_bytes: usize,
    pub fields_per_row: usize,
    pub seed: u64,
    pub snapshot_count: usize,
    /// Mapreduce: bytes allocated during bootstrap as a fraction of the heap.
    pub bootstrap_fraction: f64,
    /// Page-cache capacity as a fraction of the heap's pages.
    pub cache_fraction: f64,
    /// Allocstress repetitions and warm-ups per configuration.
    pub repetitions: usize,
    pub warmups: usize,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        WorkloadSpec {
            kind: WorkloadKind::Readonly,
            entries: 100_000,
            operations: 2_000_000,
            threads: 1,
            value_bytes: 64,
            fields_per_row: 24,
            seed: 42,
            snapshot_count: 7,
            bootstrap_fraction: 0.5,
            cache_fraction: 0.25,
            repetitions: 10,
            warmups: 10,
        }
    }
}

impl WorkloadSpec {
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.threads == 0 {
            return bad("threads must be >= 1".into());
        }
        if self.fields_per_row == 0 {
            return bad("fields per row must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.bootstrap_fraction) {
            return bad(format!(
                "bootstrap fraction must be in [0, 1], got {}",
                self.bootstrap_fraction
            ));
        }
        if !(0.0..=1.0).contains(&self.cache_fraction) {
            return bad(format!(
                "cache fraction must be in [0, 1], got {}",
                self.cache_fraction
            ));
        }
        if self.kind == WorkloadKind::Allocstress && self.repetitions == 0 {
            return bad("allocstress needs at least one repetition".into());
        }
        Ok(())
    }

    /// Rows per table, rounding up so no entry is lost.
    pub fn rows_per_table(&self) -> usize {
        let rows = self.entries.div_ceil(self.fields_per_row as u64);
        rows.div_ceil(self.threads as u64) as usize
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub heap: HeapConfig,
    pub workload: WorkloadSpec,
}

impl RunConfig {
    pub fn run_id(&self) -> String {
        let mode = match self.heap.mode {
            Mode::Base => "base",
            Mode::Bda => "bda",
        };
        format!("{}-{mode}-s{}", self.workload.kind, self.workload.seed)
    }

    /// Capacity of the simulated page cache in pages.
    pub fn cache_pages(&self) -> usize {
        ((self.heap.heap_bytes / bdaheap::analyzer::PAGE_BYTES) as f64
            * self.workload.cache_fraction) as usize
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("out of memory: {0}")]
    OutOfMemory(String),
    #[error(transparent)]
    Gc(GcError),
    #[error(transparent)]
    Analyzer(#[from] bdaheap::analyzer::AnalyzerError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl From<GcError> for CliError {
    fn from(e: GcError) -> Self {
        match e {
            GcError::OutOfMemory(m) => CliError::OutOfMemory(m.to_string()),
            GcError::InvalidConfig(m) => CliError::Config(m),
            e => CliError::Gc(e),
        }
    }
}

impl CliError {
    pub const EXIT_CONFIG: u8 = 2;
    pub const EXIT_OOM: u8 = 3;
    pub const EXIT_OTHER: u8 = 1;

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => Self::EXIT_CONFIG,
            CliError::OutOfMemory(_) => Self::EXIT_OOM,
            _ => Self::EXIT_OTHER,
        }
    }
}
