use std::time::Duration;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum GcKind {
    #[default]
    Minor,
    Full,
}

/// Per-collection record handed to the harness.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GcStats {
    pub kind: GcKind,
    /// Set when a requested minor collection ran as a full one.
    pub escalated: bool,
    pub pause: Duration,
    pub bytes_copied: u64,
    pub objects_copied: u64,
    /// Objects moved from the young into the old generation.
    pub objects_promoted: u64,
    pub containers_created: u64,
    pub gang_objects: u64,
    pub queue_drained: u64,
    pub queue_dropped: u64,
    pub degraded_containers: u64,
    pub mark_time: Duration,
    pub summary_time: Duration,
    pub compact_time: Duration,
    pub cleanup_time: Duration,
    pub live_bytes: u64,
    pub regions_moved: u64,
    pub segments_released: u64,
}

impl GcStats {
    pub(crate) fn absorb(&mut self, w: &WorkerCounters) {
        self.bytes_copied += w.bytes_copied;
        self.objects_copied += w.objects_copied;
        self.objects_promoted += w.objects_promoted;
        self.gang_objects += w.gang_objects;
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct WorkerCounters {
    pub bytes_copied: u64,
    pub objects_copied: u64,
    pub objects_promoted: u64,
    pub gang_objects: u64,
}

/// Totals over the heap's lifetime.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct HeapTotals {
    pub minor_collections: u64,
    pub full_collections: u64,
    pub total_pause: Duration,
    pub bytes_allocated: u64,
    pub objects_allocated: u64,
    pub bda_allocations: u64,
}

impl HeapTotals {
    pub(crate) fn record(&mut self, s: &GcStats) {
        match s.kind {
            GcKind::Minor => self.minor_collections += 1,
            GcKind::Full => self.full_collections += 1,
        }
        self.total_pause += s.pause;
    }
}
