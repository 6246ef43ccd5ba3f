//! Full collection: parallel mark, single-threaded summary, parallel
//! region compaction and a single-threaded cleanup.

mod compact;
mod mark;
mod summary;

use std::time::Instant;

pub use compact::RegionClaims;
pub use mark::MarkState;
pub use summary::{region_destinations, Region, SummaryData};

use crate::barrier::BlockStartTable;
use crate::error::Result;
use crate::heap::Heap;
use crate::layout::{AddrRange, HeapGeometry, OldLayout, REGION_BYTES};
use crate::memory::Memory;
use crate::object::{
    filler_word, is_marked, object_size, ClassRegistry, ManagedRef, Shape, MARK_BIT,
};
use crate::stats::{GcKind, GcStats};

pub(crate) struct FullCtx<'a> {
    mem: &'a Memory,
    starts: &'a BlockStartTable,
    shapes: &'a [Shape],
    young: AddrRange,
    old_base: u64,
    region_count: usize,
    workers: usize,
}

impl FullCtx<'_> {
    #[inline]
    fn size(&self, a: u64) -> u64 {
        object_size(self.shapes, self.mem.load(a))
    }

    #[inline]
    fn refs(&self, a: u64) -> usize {
        self.shapes[self.mem.load(a) as u32 as usize].refs as usize
    }

    fn fill(&self, addr: u64, bytes: u64) {
        if bytes > 0 {
            self.mem.store(addr, filler_word(bytes));
            self.starts.record(addr, bytes);
        }
    }
}

fn full_ctx<'a>(
    mem: &'a Memory,
    starts: &'a BlockStartTable,
    classes: &'a ClassRegistry,
    g: &HeapGeometry,
    workers: usize,
) -> FullCtx<'a> {
    FullCtx {
        mem,
        starts,
        shapes: classes.shapes(),
        young: g.young_range(),
        old_base: g.old_base(),
        region_count: (g.old_range().len() / REGION_BYTES) as usize,
        workers,
    }
}

impl Heap {
    /// Stop-the-world full collection of both generations.
    pub fn full_collect(&mut self) -> Result<GcStats> {
        let s = self.full_collect_inner()?;
        Ok(self.finish_collection(s))
    }

    pub(crate) fn full_collect_inner(&mut self) -> Result<GcStats> {
        let start = Instant::now();
        let mut stats = GcStats {
            kind: GcKind::Full,
            ..GcStats::default()
        };
        let mut roots = self.gather_roots();
        let ctx = full_ctx(
            &self.mem,
            &self.starts,
            &self.classes,
            &self.layout.geometry,
            self.config.gc_threads,
        );

        let t = Instant::now();
        let mark = ctx.mark(&roots);
        stats.mark_time = t.elapsed();

        let t = Instant::now();
        let mut summary = ctx.summarize(&mut self.layout, &mark);
        stats.summary_time = t.elapsed();

        let t = Instant::now();
        let extents = ctx.forward(&summary, &mark.young);
        ctx.update_references(&extents, &mark.young);
        for v in roots.iter_mut().filter(|v| **v != 0) {
            *v = self.mem.load(*v + 8);
        }
        let young_evacuated = summary.young_dest.is_some();
        let before = self.queue.len();
        if young_evacuated {
            self.queue.clear();
        } else {
            let mem = &self.mem;
            self.queue.retain(|e| mem.load(e.addr()) & MARK_BIT != 0);
        }
        stats.queue_dropped = (before - self.queue.len()) as u64;
        let live_parents: Vec<_> = self
            .layout
            .containers()
            .filter(|c| !c.parent.is_null() && self.mem.load(c.parent.addr()) & MARK_BIT != 0)
            .map(|c| (c.id, c.parent.addr()))
            .collect();
        for (id, p) in live_parents {
            let np = self.mem.load(p + 8);
            self.layout.container_mut(id).expect("container").parent = ManagedRef(np);
        }
        stats.regions_moved = ctx.compact(&mut summary, &extents, &self.layout);
        ctx.move_young(&mark.young);
        stats.compact_time = t.elapsed();

        let t = Instant::now();
        cleanup(&mut self.layout, &ctx, &summary);
        stats.cleanup_time = t.elapsed();

        self.scatter_roots(&roots);
        if young_evacuated {
            self.reset_eden();
            self.from_top = self.from_space().start;
        }
        self.cards.clean_or_invalidate(young_evacuated);
        stats.live_bytes = mark.region_live.iter().sum::<u64>() + summary.young_bytes;
        stats.objects_copied = mark.marked_objects;
        stats.segments_released = summary.released.len() as u64;
        if young_evacuated {
            stats.objects_promoted = mark.young.len() as u64;
        }
        stats.pause = start.elapsed();
        log::debug!(
            "full gc: {} live bytes, {} regions moved, {} segments released, {:?}",
            stats.live_bytes,
            stats.regions_moved,
            stats.segments_released,
            stats.pause
        );
        Ok(stats)
    }

    /// Runs the marking phase alone and returns the marked set, then clears
    /// the marks. Collection state is otherwise untouched.
    pub fn marked_set(&mut self) -> Vec<ManagedRef> {
        let roots = self.gather_roots();
        let ctx = full_ctx(
            &self.mem,
            &self.starts,
            &self.classes,
            &self.layout.geometry,
            self.config.gc_threads,
        );
        let mark = ctx.mark(&roots);
        let mut out: Vec<u64> = mark.young.clone();
        for area in self.old_areas() {
            for a in self.objects_in(area) {
                if is_marked(self.mem.load(a)) {
                    out.push(a);
                }
            }
        }
        for &a in &out {
            self.mem.store(a, self.mem.load(a) & !MARK_BIT);
        }
        out.sort_unstable();
        out.into_iter().map(ManagedRef).collect()
    }
}

/// Applies the summary to the layout: releases dead segments, moves segment
/// ownership to the destination slots, sets tops, pools free segments and
/// makes every space parsable again.
fn cleanup(layout: &mut OldLayout, ctx: &FullCtx<'_>, s: &SummaryData) {
    for id in &s.released {
        layout
            .detach_segment(*id)
            .expect("released segment was owned");
    }
    for c in &s.dead_containers {
        layout.remove_container(*c);
    }
    for c in &s.orphaned {
        layout.container_mut(*c).expect("orphan").parent = ManagedRef::NULL;
    }
    let mut moves: Vec<_> = s
        .units
        .iter()
        .filter_map(|u| {
            u.segments
                .map(|(src, dst)| (src, dst, u.dest_base + u.live))
        })
        .collect();
    moves.sort_by_key(|m| layout.segment(m.1).range.start);
    for &(src, dst, top) in &moves {
        layout.transfer_segment(src, dst);
        let seg = layout.segment_mut(dst);
        seg.top = top;
        let end = seg.range.end;
        ctx.fill(top, end - top);
    }
    layout.nonbda_top = s.new_nonbda_top
        + if s.young_dest.is_some() {
            s.young_bytes
        } else {
            0
        };
    layout.rebuild_pools();
    for sp in &layout.spaces {
        for id in (0..sp.slot_count()).filter_map(|i| sp.slot(i)) {
            let seg = layout.segment(id);
            if seg.owner.is_none() {
                ctx.fill(seg.range.start, seg.range.len());
            }
        }
    }
    for id in layout.spilled_segments() {
        let seg = layout.segment(id);
        if seg.owner.is_none() {
            ctx.fill(seg.range.start, seg.range.len());
        }
    }
}
