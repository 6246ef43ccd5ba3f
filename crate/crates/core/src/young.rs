//! Minor collection: queued bda roots are gang-promoted into container
//! segments first, then the rest of the young generation is copied in
//! parallel with tenuring.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Instant;

use parking_lot::Mutex;

use crate::barrier::{scan_dirty_ranges, BlockStartTable, CardTable};
use crate::error::Result;
use crate::heap::{field_addr, Heap};
use crate::layout::{AddrRange, ContainerId, OldLayout, SegmentId};
use crate::memory::Memory;
use crate::object::{
    header_age, header_class, object_size, with_age, ManagedRef, ReferenceQueueEntry, Shape,
    FORWARD_BUSY, HEADER_BYTES, MARK_BIT,
};
use crate::stats::{GcKind, GcStats, WorkerCounters};
use crate::workers::{self, Local};

const TO_PLAB_BYTES: u64 = 8 * 1024;
const OLD_PLAB_BYTES: u64 = 16 * 1024;
/// A buffer with at least this much room left is kept; the object that did
/// not fit is allocated directly instead.
const PLAB_KEEP_BYTES: u64 = 512;
const RANGE_CHUNK_BYTES: u64 = 8 * 1024;

/// Old-generation room demanded beyond the young occupancy before a minor
/// collection starts, covering buffer tails.
pub(crate) fn promotion_margin(workers: usize) -> u64 {
    workers as u64 * 2 * OLD_PLAB_BYTES
}

#[derive(Clone, Copy, Default)]
struct Buf {
    cur: u64,
    end: u64,
}

impl Buf {
    fn take(&mut self, size: u64) -> Option<u64> {
        (self.cur + size <= self.end).then(|| {
            let a = self.cur;
            self.cur += size;
            a
        })
    }

    fn room(&self) -> u64 {
        self.end - self.cur
    }
}

/// Allocation state shared by all workers.
struct Shared<'a> {
    layout: &'a mut OldLayout,
    to_top: u64,
    to_end: u64,
}

struct Ctx<'a> {
    mem: &'a Memory,
    cards: &'a CardTable,
    starts: &'a BlockStartTable,
    shapes: &'a [Shape],
    young: AddrRange,
    eden: AddrRange,
    threshold: u8,
    delegation_level: u64,
    full_closure: bool,
    segment_size: u64,
    spill_reserve: u64,
    shared: Mutex<Shared<'a>>,
}

#[derive(Default)]
struct MinorWorker {
    to: Buf,
    old: Buf,
    counters: WorkerCounters,
    /// Gang-copied objects, scanned again by the general phase.
    pending: Vec<u64>,
    containers: u64,
    degraded: u64,
    drained: u64,
    dropped: u64,
}

enum Task {
    Root(usize),
    Range(AddrRange),
    Scan(u64),
}

enum MarkTask {
    Value(u64),
    Range(AddrRange),
    Object(u64),
}

/// Segment being filled by one gang.
struct Gang {
    space: u16,
    container: ContainerId,
    seg: Option<(SegmentId, Buf)>,
    degraded: bool,
}

impl Ctx<'_> {
    #[inline]
    fn is_young(&self, a: u64) -> bool {
        self.young.contains(a)
    }

    #[inline]
    fn size(&self, a: u64) -> u64 {
        object_size(self.shapes, self.mem.load(a))
    }

    #[inline]
    fn refs(&self, a: u64) -> usize {
        self.shapes[self.mem.load(a) as u32 as usize].refs as usize
    }

    fn fill(&self, addr: u64, bytes: u64, old: bool) {
        if bytes == 0 {
            return;
        }
        self.mem.store(addr, crate::object::filler_word(bytes));
        if old {
            self.starts.record(addr, bytes);
        }
    }

    /// Claims `obj` for copying. `Err` carries the forwarding address when
    /// another copier already won.
    fn claim(&self, obj: u64) -> std::result::Result<(), u64> {
        let slot = obj + 8;
        loop {
            let w = self.mem.load_acquire(slot);
            if w > FORWARD_BUSY {
                return Err(w);
            }
            if w == FORWARD_BUSY {
                std::hint::spin_loop();
                continue;
            }
            if self.mem.compare_exchange(slot, 0, FORWARD_BUSY).is_ok() {
                return Ok(());
            }
        }
    }

    /// Copies a claimed object and publishes its forwarding address.
    fn copy(&self, obj: u64, dest: u64, size: u64, age: u8) {
        let w0 = self.mem.load(obj);
        self.mem
            .copy_words(obj + HEADER_BYTES, dest + HEADER_BYTES, size - HEADER_BYTES);
        self.mem.store(dest, with_age(w0 & !MARK_BIT, age));
        self.mem.store(dest + 8, 0);
        if !self.is_young(dest) {
            self.starts.record(dest, size);
        }
        self.mem.store_release(obj + 8, dest);
    }

    fn alloc_to(&self, w: &mut MinorWorker, size: u64) -> Option<u64> {
        if let Some(a) = w.to.take(size) {
            return Some(a);
        }
        let mut sh = self.shared.lock();
        if size > TO_PLAB_BYTES / 2 || w.to.room() >= PLAB_KEEP_BYTES {
            if sh.to_top + size > sh.to_end {
                return None;
            }
            let a = sh.to_top;
            sh.to_top += size;
            return Some(a);
        }
        let chunk = TO_PLAB_BYTES.min(sh.to_end - sh.to_top);
        if chunk < size {
            return None;
        }
        let old = std::mem::replace(
            &mut w.to,
            Buf {
                cur: sh.to_top,
                end: sh.to_top + chunk,
            },
        );
        sh.to_top += chunk;
        drop(sh);
        self.fill(old.cur, old.room(), false);
        w.to.take(size)
    }

    fn alloc_old(&self, w: &mut MinorWorker, size: u64) -> u64 {
        if let Some(a) = w.old.take(size) {
            return a;
        }
        let mut sh = self.shared.lock();
        let l = &mut *sh.layout;
        let room = l.spill_floor - l.nonbda_top;
        if size > OLD_PLAB_BYTES / 2 || w.old.room() >= PLAB_KEEP_BYTES {
            assert!(size <= room, "promotion failure: old generation exhausted");
            let a = l.nonbda_top;
            l.nonbda_top += size;
            return a;
        }
        let chunk = OLD_PLAB_BYTES.min(room);
        assert!(chunk >= size, "promotion failure: old generation exhausted");
        let old = std::mem::replace(
            &mut w.old,
            Buf {
                cur: l.nonbda_top,
                end: l.nonbda_top + chunk,
            },
        );
        l.nonbda_top += chunk;
        drop(sh);
        self.fill(old.cur, old.room(), true);
        w.old.take(size).expect("fresh buffer fits")
    }

    /// Copies a young object to to-space or, once old enough (or when
    /// to-space is full), to the non-bda old space.
    fn evacuate(&self, w: &mut MinorWorker, local: &Local<'_, Task>, obj: u64) -> u64 {
        if let Err(fwd) = self.claim(obj) {
            return fwd;
        }
        let size = self.size(obj);
        let age = header_age(self.mem.load(obj)).saturating_add(1);
        let to = if age < self.threshold {
            self.alloc_to(w, size)
        } else {
            None
        };
        let dest = match to {
            Some(d) => d,
            None => {
                w.counters.objects_promoted += 1;
                self.alloc_old(w, size)
            }
        };
        self.copy(obj, dest, size, age.min(self.threshold));
        w.counters.objects_copied += 1;
        w.counters.bytes_copied += size;
        local.push(Task::Scan(dest));
        dest
    }

    fn scan(&self, w: &mut MinorWorker, local: &Local<'_, Task>, obj: u64) {
        let old = !self.is_young(obj);
        for i in 0..self.refs(obj) {
            let slot = field_addr(obj, i);
            let v = self.mem.load(slot);
            if v == 0 || !self.is_young(v) {
                continue;
            }
            let n = self.evacuate(w, local, v);
            self.mem.store(slot, n);
            if old && self.is_young(n) {
                self.cards.dirty_on_store(slot);
            }
        }
    }

    fn scan_range(&self, w: &mut MinorWorker, local: &Local<'_, Task>, r: AddrRange) {
        let mut a = r.start;
        while a < r.end {
            let size = self.size(a);
            self.scan(w, local, a);
            a += size;
        }
    }

    // ---- young-only marking ----

    /// Marks a young object. Newly marked bda-class instances in eden are
    /// exactly the live reference-queue entries, so they are gathered here.
    fn mark_value(&self, live: &mut Vec<ReferenceQueueEntry>, local: &Local<'_, MarkTask>, v: u64) {
        if v == 0 || !self.is_young(v) {
            return;
        }
        let w0 = self.mem.fetch_or(v, MARK_BIT);
        if w0 & MARK_BIT != 0 {
            return;
        }
        if let Some(space) = self.shapes[header_class(w0) as usize].bda_space {
            if self.eden.contains(v) {
                live.push(ReferenceQueueEntry {
                    root: ManagedRef(v),
                    target_space: space,
                });
            }
        }
        local.push(MarkTask::Object(v));
    }

    fn mark_fields(
        &self,
        live: &mut Vec<ReferenceQueueEntry>,
        local: &Local<'_, MarkTask>,
        obj: u64,
    ) {
        for i in 0..self.refs(obj) {
            self.mark_value(live, local, self.mem.load(field_addr(obj, i)));
        }
    }

    // ---- gang promotion ----

    fn gang_alloc(&self, g: &mut Gang, size: u64) -> Option<u64> {
        if g.degraded || size > self.segment_size {
            return None;
        }
        if let Some((_, buf)) = &mut g.seg {
            if let Some(a) = buf.take(size) {
                return Some(a);
            }
        }
        self.close_segment(g);
        let mut sh = self.shared.lock();
        match sh
            .layout
            .allocate_segment(g.space, g.container, self.spill_reserve)
        {
            Ok(id) => {
                let r = sh.layout.segment(id).range;
                let mut buf = Buf {
                    cur: r.start,
                    end: r.end,
                };
                let a = buf.take(size);
                g.seg = Some((id, buf));
                a
            }
            Err(_) => {
                g.degraded = true;
                if let Some(c) = sh.layout.container_mut(g.container) {
                    c.degraded = true;
                }
                None
            }
        }
    }

    fn close_segment(&self, g: &mut Gang) {
        if let Some((id, buf)) = g.seg.take() {
            self.fill(buf.cur, buf.room(), true);
            self.shared.lock().layout.segment_mut(id).top = buf.cur;
        }
    }

    fn gang_copy(&self, w: &mut MinorWorker, g: &mut Gang, obj: u64) -> u64 {
        let size = self.size(obj);
        let dest = match self.gang_alloc(g, size) {
            Some(d) => d,
            None => self.alloc_old(w, size),
        };
        self.copy(obj, dest, size, self.threshold);
        w.counters.objects_copied += 1;
        w.counters.bytes_copied += size;
        w.counters.objects_promoted += 1;
        w.counters.gang_objects += 1;
        w.pending.push(dest);
        dest
    }

    fn push_fields(&self, stack: &mut Vec<(u64, u64)>, obj: u64, depth: u64) {
        for i in (0..self.refs(obj)).rev() {
            stack.push((field_addr(obj, i), depth));
        }
    }

    /// Promotes one queued root and its young closure up to the delegation
    /// level into a new container, depth first.
    fn gang_promote(&self, w: &mut MinorWorker, entry: ReferenceQueueEntry) {
        let root = entry.root.0;
        if !self.is_young(root) || self.mem.load(root) & MARK_BIT == 0 {
            w.dropped += 1;
            return;
        }
        w.drained += 1;
        if self.claim(root).is_err() {
            // Already copied as a member of another gang.
            return;
        }
        let container = self
            .shared
            .lock()
            .layout
            .new_container(entry.target_space, ManagedRef::NULL);
        w.containers += 1;
        let mut g = Gang {
            space: entry.target_space,
            container,
            seg: None,
            degraded: false,
        };
        let parent = self.gang_copy(w, &mut g, root);
        self.shared
            .lock()
            .layout
            .container_mut(container)
            .expect("new container")
            .parent = ManagedRef(parent);

        let mut stack = Vec::new();
        if self.full_closure || self.delegation_level > 0 {
            self.push_fields(&mut stack, parent, 1);
        }
        while let Some((slot, depth)) = stack.pop() {
            let v = self.mem.load(slot);
            if v == 0 || !self.is_young(v) {
                continue;
            }
            if let Err(fwd) = self.claim(v) {
                self.mem.store(slot, fwd);
                continue;
            }
            let dest = self.gang_copy(w, &mut g, v);
            self.mem.store(slot, dest);
            if self.full_closure || depth < self.delegation_level {
                self.push_fields(&mut stack, dest, depth + 1);
            }
        }
        self.close_segment(&mut g);
        if g.degraded {
            w.degraded += 1;
        }
    }
}

/// Splits `r` at object boundaries into chunks of roughly
/// `RANGE_CHUNK_BYTES`.
fn chunk_range(ctx: &Ctx<'_>, r: AddrRange, out: &mut Vec<AddrRange>) {
    let mut start = r.start;
    let mut a = r.start;
    while a < r.end {
        a += ctx.size(a);
        if a - start >= RANGE_CHUNK_BYTES || a >= r.end {
            out.push(AddrRange::new(start, a));
            start = a;
        }
    }
}

impl Heap {
    /// Stop-the-world minor collection. Runs a full collection instead when
    /// the old generation could not absorb the whole young generation.
    pub fn minor_collect(&mut self) -> Result<GcStats> {
        let workers = self.config.gc_threads;
        let young_used = self.young_used();
        if self.layout.nonbda_free() < young_used + promotion_margin(workers) {
            log::debug!("minor collection escalated: old generation cannot absorb young");
            let mut s = self.full_collect_inner()?;
            s.escalated = true;
            return Ok(self.finish_collection(s));
        }
        let start = Instant::now();
        let mut stats = GcStats {
            kind: GcKind::Minor,
            ..GcStats::default()
        };

        let dirty: Vec<AddrRange> = self
            .old_areas()
            .into_iter()
            .flat_map(|area| {
                scan_dirty_ranges(&self.cards, &self.starts, area.start, area.end, |a| {
                    self.size_at(a)
                })
            })
            .collect();
        self.cards.clean_or_invalidate(true);

        let mut queue = std::mem::take(&mut self.queue);
        let root_values = self.gather_roots();
        let root_slots: Vec<AtomicU64> = root_values.iter().map(|v| AtomicU64::new(*v)).collect();
        let g = self.layout.geometry.clone();
        let to = g.survivors[1 - self.from_index];

        let Heap {
            mem,
            cards,
            starts,
            classes,
            layout,
            config,
            ..
        } = self;
        let ctx = Ctx {
            mem,
            cards,
            starts,
            shapes: classes.shapes(),
            young: g.young_range(),
            eden: g.eden,
            threshold: config.tenuring_threshold.max(1),
            delegation_level: config.bda.delegation_level,
            full_closure: config.full_closure,
            segment_size: g.segment_size,
            // spilling stops well before the promotion guarantee is at risk
            spill_reserve: young_used + 2 * promotion_margin(workers),
            shared: Mutex::new(Shared {
                layout,
                to_top: to.start,
                to_end: to.end,
            }),
        };

        let mut states: Vec<MinorWorker> = Vec::new();
        let mut queue_mismatch = Vec::new();
        if !queue.is_empty() {
            // Liveness of queued roots: mark the young generation.
            let mut seed: Vec<MarkTask> = root_values.iter().map(|v| MarkTask::Value(*v)).collect();
            seed.extend(dirty.iter().map(|r| MarkTask::Range(*r)));
            let found = workers::run(
                workers,
                seed,
                |_| Vec::new(),
                |live, local, t| match t {
                    MarkTask::Value(v) => ctx.mark_value(live, local, v),
                    MarkTask::Object(o) => ctx.mark_fields(live, local, o),
                    MarkTask::Range(r) => {
                        let mut a = r.start;
                        while a < r.end {
                            ctx.mark_fields(live, local, a);
                            a += ctx.size(a);
                        }
                    }
                },
            );
            // Eden fills in allocation order, so address order is queue order.
            // The queue itself is never swept: its dead entries would cost one
            // cache miss each.
            let mut live: Vec<ReferenceQueueEntry> = found.into_iter().flatten().collect();
            live.sort_unstable_by_key(|e| e.root.0);
            if config.verify {
                for e in &live {
                    if queue.binary_search_by_key(&e.root.0, |q| q.addr()).is_err() {
                        queue_mismatch.push(format!(
                            "live bda instance {} missing from the queue",
                            e.root
                        ));
                    }
                }
            }
            stats.queue_dropped += (queue.len() - live.len()) as u64;
            states = workers::run(
                workers,
                live,
                |_| MinorWorker::default(),
                |w, _, e| ctx.gang_promote(w, e),
            );
        }

        let mut seed: Vec<Task> = (0..root_slots.len()).map(Task::Root).collect();
        let mut chunks = Vec::new();
        for r in &dirty {
            chunk_range(&ctx, *r, &mut chunks);
        }
        seed.extend(chunks.into_iter().map(Task::Range));
        for s in &mut states {
            seed.extend(s.pending.drain(..).map(Task::Scan));
        }
        // Gang buffers carry over into the general phase.
        let mut carry = states.into_iter();
        let carried: Vec<Mutex<Option<MinorWorker>>> =
            (0..workers).map(|_| Mutex::new(carry.next())).collect();
        let leftovers: Vec<MinorWorker> = carry.collect();
        let general = workers::run(
            workers,
            seed,
            |i| carried[i].lock().take().unwrap_or_default(),
            |w, local, t| match t {
                Task::Root(i) => {
                    let v = root_slots[i].load(Ordering::Relaxed);
                    if v != 0 && ctx.is_young(v) {
                        let n = ctx.evacuate(w, local, v);
                        root_slots[i].store(n, Ordering::Relaxed);
                    }
                }
                Task::Range(r) => ctx.scan_range(w, local, r),
                Task::Scan(o) => ctx.scan(w, local, o),
            },
        );

        for w in general.iter().chain(leftovers.iter()) {
            ctx.fill(w.to.cur, w.to.room(), false);
            ctx.fill(w.old.cur, w.old.room(), true);
            stats.absorb(&w.counters);
            stats.containers_created += w.containers;
            stats.degraded_containers += w.degraded;
            stats.queue_drained += w.drained;
            stats.queue_dropped += w.dropped;
        }
        let to_top = ctx.shared.into_inner().to_top;

        self.verify_failures.extend(queue_mismatch);
        // keep the buffer so the mutator does not regrow it every cycle
        queue.clear();
        self.queue = queue;
        let values: Vec<u64> = root_slots.into_iter().map(AtomicU64::into_inner).collect();
        self.scatter_roots(&values);
        self.reset_eden();
        self.from_index = 1 - self.from_index;
        self.from_top = to_top;
        stats.pause = start.elapsed();
        log::debug!(
            "minor gc: {} objects copied, {} promoted, {} containers, {:?}",
            stats.objects_copied,
            stats.objects_promoted,
            stats.containers_created,
            stats.pause
        );
        Ok(self.finish_collection(stats))
    }
}
