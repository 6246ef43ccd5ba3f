use std::fs;
use std::hash::{Hash, Hasher};
use std::path::{Path, PathBuf};

use bdaheap::analyzer::{self, HeapSnapshot};
use bdaheap::{GcKind, Heap};

use crate::config::{CliError, RunConfig};

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LatencyStats {
    pub mean_ns: f64,
    pub p50_ns: f64,
    pub p99_ns: f64,
}

impl LatencyStats {
    /// Stats over per-batch mean latencies.
    pub fn from_samples(mut samples: Vec<f64>) -> Self {
        if samples.is_empty() {
            return LatencyStats::default();
        }
        samples.sort_by(f64::total_cmp);
        let at = |q: f64| samples[((samples.len() - 1) as f64 * q).round() as usize];
        LatencyStats {
            mean_ns: samples.iter().sum::<f64>() / samples.len() as f64,
            p50_ns: at(0.5),
            p99_ns: at(0.99),
        }
    }
}

/// Locality metrics of one snapshot. `coloring` digests the per-color
/// object counts and classes, which do not depend on addresses.
#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotMetrics {
    pub seq: u64,
    pub objects: usize,
    pub colored: usize,
    pub objects_per_page: f64,
    pub pages_per_color: f64,
    pub reference_distance: f64,
    pub coloring: u64,
}

impl SnapshotMetrics {
    pub fn of(snap: &HeapSnapshot) -> Self {
        let mut per_color: std::collections::BTreeMap<u32, (u64, u64)> = Default::default();
        for r in &snap.records {
            if let Some(c) = r.color {
                let e = per_color.entry(c).or_default();
                e.0 += 1;
                e.1 += r.class as u64;
            }
        }
        let mut h = std::collections::hash_map::DefaultHasher::new();
        per_color.hash(&mut h);
        SnapshotMetrics {
            seq: snap.seq,
            objects: snap.len(),
            colored: per_color.values().map(|v| v.0 as usize).sum(),
            objects_per_page: analyzer::objects_per_page(snap),
            pages_per_color: analyzer::pages_per_color(snap),
            reference_distance: analyzer::mean_reference_distance(snap),
            coloring: h.finish(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GcSummary {
    pub minor: u64,
    pub full: u64,
    pub escalated: u64,
    pub total_pause_ms: f64,
    pub max_pause_ms: f64,
    pub containers: u64,
    pub degraded: u64,
    pub bda_allocations: u64,
}

impl GcSummary {
    pub fn of(heap: &Heap) -> Self {
        let h = heap.gc_history();
        let ms = |d: std::time::Duration| d.as_secs_f64() * 1e3;
        GcSummary {
            minor: h.iter().filter(|s| s.kind == GcKind::Minor).count() as u64,
            full: h.iter().filter(|s| s.kind == GcKind::Full).count() as u64,
            escalated: h.iter().filter(|s| s.escalated).count() as u64,
            total_pause_ms: ms(heap.total_pause()),
            max_pause_ms: h.iter().map(|s| ms(s.pause)).fold(0.0, f64::max),
            containers: h.iter().map(|s| s.containers_created).sum(),
            degraded: h.iter().map(|s| s.degraded_containers).sum(),
            bda_allocations: heap.totals().bda_allocations,
        }
    }
}

/// Allocstress timing of one configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct AllocTiming {
    pub tracked_classes: usize,
    pub median_ns: f64,
    /// Median wall time over the base median, with the 10th..90th
    /// percentile range of the paired per-repetition ratios.
    pub ratio: f64,
    pub ratio_low: f64,
    pub ratio_high: f64,
    /// Same ratio with each repetition's collection pauses subtracted.
    pub mutator_ratio: f64,
    /// Median collection pause per repetition.
    pub median_pause_ns: f64,
    pub queue_len: usize,
    pub tracked_allocations: u64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsReport {
    pub run_id: String,
    pub mode: String,
    pub ops: u64,
    pub checksum: u64,
    pub latency: LatencyStats,
    pub gc: GcSummary,
    pub snapshots: Vec<SnapshotMetrics>,
    pub page_faults: u64,
    pub page_accesses: u64,
    pub base_alloc_ns: f64,
    pub alloc: Vec<AllocTiming>,
    /// Reduce output as (key, sum, count), sorted by key.
    pub reduced: Vec<(u64, u64, u64)>,
}

impl MetricsReport {
    pub fn mean_objects_per_page(&self) -> f64 {
        mean(self.snapshots.iter().map(|s| s.objects_per_page))
    }

    pub fn colorings(&self) -> Vec<u64> {
        self.snapshots.iter().map(|s| s.coloring).collect()
    }

    /// (metric, snapshot seq, value) rows of the CSV.
    pub fn rows(&self) -> Vec<(String, Option<u64>, f64)> {
        let mut out: Vec<(String, Option<u64>, f64)> = vec![
            ("ops".into(), None, self.ops as f64),
            ("checksum".into(), None, self.checksum as f64),
            ("latency_mean_ns".into(), None, self.latency.mean_ns),
            ("latency_p50_ns".into(), None, self.latency.p50_ns),
            ("latency_p99_ns".into(), None, self.latency.p99_ns),
            ("minor_gcs".into(), None, self.gc.minor as f64),
            ("full_gcs".into(), None, self.gc.full as f64),
            ("escalated_gcs".into(), None, self.gc.escalated as f64),
            ("gc_pause_total_ms".into(), None, self.gc.total_pause_ms),
            ("gc_pause_max_ms".into(), None, self.gc.max_pause_ms),
            ("containers".into(), None, self.gc.containers as f64),
            ("degraded_containers".into(), None, self.gc.degraded as f64),
            (
                "bda_allocations".into(),
                None,
                self.gc.bda_allocations as f64,
            ),
            ("page_faults".into(), None, self.page_faults as f64),
            ("page_accesses".into(), None, self.page_accesses as f64),
            (
                "objects_per_page".into(),
                None,
                self.mean_objects_per_page(),
            ),
        ];
        for s in &self.snapshots {
            let seq = Some(s.seq);
            out.push(("objects".into(), seq, s.objects as f64));
            out.push(("objects_per_page".into(), seq, s.objects_per_page));
            out.push(("pages_per_color".into(), seq, s.pages_per_color));
            out.push(("reference_distance".into(), seq, s.reference_distance));
        }
        if !self.alloc.is_empty() {
            out.push(("alloc_base_median_ns".into(), None, self.base_alloc_ns));
        }
        for a in &self.alloc {
            let t = a.tracked_classes;
            out.push((format!("alloc_median_ns_tracked{t}"), None, a.median_ns));
            out.push((format!("alloc_ratio_tracked{t}"), None, a.ratio));
            out.push((format!("alloc_ratio_low_tracked{t}"), None, a.ratio_low));
            out.push((format!("alloc_ratio_high_tracked{t}"), None, a.ratio_high));
            out.push((
                format!("alloc_mutator_ratio_tracked{t}"),
                None,
                a.mutator_ratio,
            ));
            out.push((
                format!("alloc_pause_median_ns_tracked{t}"),
                None,
                a.median_pause_ns,
            ));
        }
        out
    }
}

pub fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// Writes `<run_id>.csv` and `<run_id>.manifest` into `dir`; returns the
/// CSV path.
pub fn write_report(
    dir: &Path,
    cfg: &RunConfig,
    report: &MetricsReport,
) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir)?;
    let path = dir.join(format!("{}.csv", report.run_id));
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["run_id", "mode", "metric", "snapshot_seq", "value"])?;
    for (metric, seq, value) in report.rows() {
        let seq = seq.map(|s| s.to_string()).unwrap_or_default();
        w.write_record([
            report.run_id.as_str(),
            report.mode.as_str(),
            metric.as_str(),
            seq.as_str(),
            &value.to_string(),
        ])?;
    }
    w.flush()?;
    fs::write(
        dir.join(format!("{}.manifest", report.run_id)),
        manifest(cfg),
    )?;
    Ok(path)
}

/// The full configuration, one `key = value` line each.
pub fn manifest(cfg: &RunConfig) -> String {
    let h = &cfg.heap;
    let b = &h.bda;
    let w = &cfg.workload;
    let lines = [
        ("run_id", cfg.run_id()),
        ("workload", w.kind.to_string()),
        ("mode", format!("{:?}", h.mode).to_lowercase()),
        ("heap_bytes", h.heap_bytes.to_string()),
        ("young_fraction", h.young_fraction.to_string()),
        ("gc_threads", h.gc_threads.to_string()),
        ("tenuring_threshold", h.tenuring_threshold.to_string()),
        ("bda_classes", b.classes.join(",")),
        ("bda_ratio", b.bda_ratio.to_string()),
        ("container_fraction", b.container_fraction.to_string()),
        ("delegation_level", b.delegation_level.to_string()),
        ("default_node_fields", b.default_node_fields.to_string()),
        ("node_fields", b.node_fields.to_string()),
        ("container_size", b.container_size.to_string()),
        ("entries", w.entries.to_string()),
        ("operations", w.operations.to_string()),
        ("threads", w.threads.to_string()),
        ("value_bytes", w.value_bytes.to_string()),
        ("fields_per_row", w.fields_per_row.to_string()),
        ("seed", w.seed.to_string()),
        ("snapshots", w.snapshot_count.to_string()),
        ("bootstrap_fraction", w.bootstrap_fraction.to_string()),
        ("cache_fraction", w.cache_fraction.to_string()),
        ("repetitions", w.repetitions.to_string()),
        ("warmups", w.warmups.to_string()),
    ];
    lines.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
}
