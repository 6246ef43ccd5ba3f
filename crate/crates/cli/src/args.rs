use std::path::PathBuf;

use bdaheap::{BdaConfig, HeapConfig, Mode};
use clap::Parser;

use crate::config::{CliError, RunConfig, WorkloadKind, WorkloadSpec};
use crate::kv::ROW_CLASS;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum CliMode {
    Base,
    Bda,
}

/// Key-value store microbenchmarks over a generational heap with bda-spaces
/// and gang promotion.
#[derive(Clone, Debug, Parser)]
#[command(name = "bdaheap", version)]
pub struct Cli {
    #[arg(long, value_enum, default_value_t = WorkloadKind::Readonly)]
    pub workload: WorkloadKind,
    /// `base` disables gang promotion and bda-spaces entirely.
    #[arg(long, value_enum, default_value_t = CliMode::Bda)]
    pub mode: CliMode,
    /// Comma-separated bda-class names.
    #[arg(long, value_delimiter = ',', default_value = ROW_CLASS)]
    pub bda_classes: Vec<String>,
    /// Fraction of the old generation given to bda-spaces.
    #[arg(long, default_value_t = 0.5)]
    pub bda_ratio: f64,
    /// CF: segments per estimated container.
    #[arg(long, default_value_t = 1)]
    pub container_fraction: u64,
    /// DL: delegation levels below a container parent.
    #[arg(long, default_value_t = 2)]
    pub delegation_level: u64,
    /// DNF: expected fields per element object.
    #[arg(long, default_value_t = 1)]
    pub dnf: u64,
    /// NF: fields per node.
    #[arg(long, default_value_t = 2)]
    pub nf: u64,
    /// CS: expected elements per container [default: fields per row].
    #[arg(long)]
    pub container_size: Option<u64>,
    #[arg(long, default_value_t = 64 << 20)]
    pub heap_bytes: u64,
    #[arg(long, default_value_t = 0.25)]
    pub young_fraction: f64,
    /// GC worker threads [default: available cores, at most 8].
    #[arg(long)]
    pub gc_threads: Option<usize>,
    #[arg(long, default_value_t = 2)]
    pub tenuring_threshold: u8,
    /// Follow the whole subgraph of a bda root instead of stopping at DL.
    #[arg(long)]
    pub full_closure: bool,
    /// Verify the heap after every collection.
    #[arg(long)]
    pub verify: bool,
    /// Mutator threads, one table each.
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    #[arg(long, default_value_t = 100_000)]
    pub entries: u64,
    #[arg(long, default_value_t = 2_000_000)]
    pub operations: u64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 7)]
    pub snapshots: usize,
    #[arg(long, default_value_t = 64)]
    pub value_bytes: usize,
    #[arg(long, default_value_t = 24)]
    pub fields_per_row: usize,
    /// Mapreduce bootstrap volume as a fraction of the heap.
    #[arg(long, default_value_t = 0.5)]
    pub bootstrap_fraction: f64,
    /// Simulated page cache as a fraction of the heap's pages.
    #[arg(long, default_value_t = 0.25)]
    pub cache_fraction: f64,
    #[arg(long, default_value_t = 10)]
    pub repetitions: usize,
    #[arg(long, default_value_t = 10)]
    pub warmups: usize,
    /// Output directory for metrics, manifest and snapshots.
    #[arg(long, default_value = "bdaheap-out")]
    pub out_dir: PathBuf,
    /// Skip writing snapshot files.
    #[arg(long)]
    pub no_snapshot_files: bool,
    /// Print the heap geometry before running.
    #[arg(long)]
    pub debug_geometry: bool,
}

impl Cli {
    pub fn bda_config(&self) -> BdaConfig {
        BdaConfig {
            classes: self
                .bda_classes
                .iter()
                .filter(|c| !c.is_empty())
                .cloned()
                .collect(),
            bda_ratio: self.bda_ratio,
            container_fraction: self.container_fraction,
            delegation_level: self.delegation_level,
            default_node_fields: self.dnf,
            node_fields: self.nf,
            container_size: self.container_size.unwrap_or(self.fields_per_row as u64),
        }
    }

    pub fn run_config(&self) -> Result<RunConfig, CliError> {
        let bda = self.bda_config();
        bda.validate()?;
        let defaults = HeapConfig::default();
        let heap = HeapConfig {
            heap_bytes: self.heap_bytes,
            young_fraction: self.young_fraction,
            mode: match self.mode {
                CliMode::Base => Mode::Base,
                CliMode::Bda => Mode::Bda,
            },
            bda,
            gc_threads: self.gc_threads.unwrap_or(defaults.gc_threads).max(1),
            tenuring_threshold: self.tenuring_threshold,
            full_closure: self.full_closure,
            verify: self.verify,
            ..defaults
        };
        let workload = WorkloadSpec {
            kind: self.workload,
            entries: self.entries,
            operations: self.operations,
            threads: self.threads,
            value_bytes: self.value_bytes,
            fields_per_row: self.fields_per_row,
            seed: self.seed,
            snapshot_count: self.snapshots,
            bootstrap_fraction: self.bootstrap_fraction,
            cache_fraction: self.cache_fraction,
            repetitions: self.repetitions,
            warmups: self.warmups,
        };
        workload.validate()?;
        Ok(RunConfig { heap, workload })
    }
}
