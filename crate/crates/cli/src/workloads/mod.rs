pub mod allocstress;
pub mod mapreduce;
pub mod readonly;

pub use allocstress::{run_allocstress, ALLOC_CLASSES, TRACKED_CLASSES};
pub use mapreduce::{mapreduce_input, reference_mapreduce, run_mapreduce, InputRow, KEY_SPACE};
pub use readonly::run_readonly;

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use bdaheap::analyzer::{take_snapshot, write_snapshot};
use bdaheap::{Heap, Mode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{CliError, RunConfig, WorkloadKind};
use crate::kv::{Kv, Table};
use crate::report::{GcSummary, MetricsReport, SnapshotMetrics};

pub fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Runs the configured workload; snapshot files go to `snap_dir` if given.
pub fn run(cfg: &RunConfig, snap_dir: Option<&Path>) -> Result<MetricsReport, CliError> {
    cfg.workload.validate()?;
    match cfg.workload.kind {
        WorkloadKind::Readonly => run_readonly(cfg, snap_dir),
        WorkloadKind::Mapreduce => run_mapreduce(cfg, snap_dir),
        WorkloadKind::Allocstress => run_allocstress(cfg),
    }
}

fn new_kv(cfg: &RunConfig) -> Result<Kv, CliError> {
    let heap = Heap::new(cfg.heap.clone())?;
    Ok(Kv::new(
        heap,
        cfg.workload.fields_per_row,
        cfg.workload.value_bytes,
    )?)
}

fn empty_report(cfg: &RunConfig) -> MetricsReport {
    MetricsReport {
        run_id: cfg.run_id(),
        mode: match cfg.heap.mode {
            Mode::Base => "base".into(),
            Mode::Bda => "bda".into(),
        },
        ..MetricsReport::default()
    }
}

/// Value bytes: a numeric word followed by random printable bytes.
fn value_bytes(r: &mut ChaCha8Rng, len: usize, value: u64) -> Vec<u8> {
    let mut v = value.to_le_bytes().to_vec();
    v.extend((8..len).map(|_| r.gen_range(b'a'..=b'z')));
    v
}

/// Minor collections until the young generation holds nothing that a
/// further minor collection would still age, so every row is promoted.
fn settle(kv: &mut Kv) -> Result<(), CliError> {
    for _ in 0..=kv.heap.config().tenuring_threshold {
        kv.heap.minor_collect()?;
    }
    Ok(())
}

/// Snapshot colored by the rows of `tables`; optionally written to disk.
fn snapshot(
    kv: &mut Kv,
    tables: &[Table],
    seq: u64,
    dir: Option<&Path>,
    run_id: &str,
) -> Result<SnapshotMetrics, CliError> {
    let cache = kv.cache.take();
    let rows = kv.rows(tables);
    kv.cache = cache;
    let snap = take_snapshot(&kv.heap, &rows, seq)?;
    if let Some(d) = dir {
        std::fs::create_dir_all(d)?;
        let f = File::create(d.join(format!("{run_id}-snapshot-{seq}.txt")))?;
        write_snapshot(&snap, BufWriter::new(f))?;
    }
    Ok(SnapshotMetrics::of(&snap))
}

/// Positions, in units of work, at which `count` snapshots are taken.
fn snapshot_points(total: u64, count: usize) -> Vec<u64> {
    (0..count as u64)
        .map(|k| k * total / count.max(1) as u64)
        .collect()
}

fn finish(kv: &Kv, report: &mut MetricsReport) {
    report.gc = GcSummary::of(&kv.heap);
    if let Some(c) = &kv.cache {
        report.page_faults = c.faults();
        report.page_accesses = c.accesses();
    }
}
