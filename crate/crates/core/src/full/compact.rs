//! Forwarding, reference update and the region-claiming compaction.

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};

use super::FullCtx;
use crate::full::summary::SummaryData;
use crate::heap::field_addr;
use crate::layout::OldLayout;
use crate::object::{is_marked, MARK_BIT};
use crate::workers;

const YOUNG_CHUNK: usize = 256;

/// First live object start and end of the last live object starting in a
/// region: the part of the region compaction reads.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub(crate) struct Extent {
    pub first: u64,
    pub end: u64,
}

/// Claim flags for destination regions.
pub struct RegionClaims {
    flags: Vec<AtomicBool>,
}

impl RegionClaims {
    pub fn new(n: usize) -> Self {
        RegionClaims {
            flags: (0..n).map(|_| AtomicBool::new(false)).collect(),
        }
    }

    /// True for exactly one caller per region.
    pub fn try_claim(&self, i: usize) -> bool {
        !self.flags[i].swap(true, Ordering::AcqRel)
    }
}

impl FullCtx<'_> {
    /// Objects of `region` (those whose start lies in it), in address order.
    fn region_objects(&self, start: u64, end: u64, area_end: u64, mut f: impl FnMut(u64, u64)) {
        let mut a = self.starts.object_covering(start, |o| self.size(o));
        if a < start {
            a += self.size(a);
        }
        let stop = end.min(area_end);
        while a < stop {
            let size = self.size(a);
            f(a, size);
            a += size;
        }
    }

    /// Stores each live object's new address in its forwarding word and
    /// returns the per-region extents.
    pub(super) fn forward(&self, s: &SummaryData, young: &[u64]) -> Vec<Extent> {
        let live: Vec<usize> = s
            .regions
            .iter()
            .filter(|r| r.live_bytes > 0)
            .map(|r| r.index)
            .collect();
        let states = workers::run(
            self.workers,
            live,
            |_| Vec::new(),
            |out, _, i| {
                let r = &s.regions[i];
                let mut cursor = r.destination.expect("live region has a destination");
                let mut ext = Extent::default();
                self.region_objects(r.range.start, r.range.end, r.area_end, |a, size| {
                    if is_marked(self.mem.load(a)) {
                        self.mem.store(a + 8, cursor);
                        cursor += size;
                        if ext.first == 0 {
                            ext.first = a;
                        }
                        ext.end = a + size;
                    }
                });
                out.push((i, ext));
            },
        );
        let mut extents = vec![Extent::default(); s.regions.len()];
        for (i, e) in states.into_iter().flatten() {
            extents[i] = e;
        }
        let mut cursor = s.young_dest;
        for &y in young {
            match cursor.as_mut() {
                Some(c) => {
                    self.mem.store(y + 8, *c);
                    *c += self.size(y);
                }
                None => self.mem.store(y + 8, y),
            }
        }
        extents
    }

    fn update_fields(&self, obj: u64) {
        for i in 0..self.refs(obj) {
            let slot = field_addr(obj, i);
            let v = self.mem.load(slot);
            if v != 0 {
                self.mem.store(slot, self.mem.load(v + 8));
            }
        }
    }

    /// Rewrites every reference field of every live object, in place.
    pub(super) fn update_references(&self, extents: &[Extent], young: &[u64]) {
        enum Task {
            Region(usize),
            Young(usize),
        }
        let mut seed: Vec<Task> = extents
            .iter()
            .enumerate()
            .filter(|(_, e)| e.end > 0)
            .map(|(i, _)| Task::Region(i))
            .collect();
        seed.extend((0..young.len()).step_by(YOUNG_CHUNK).map(Task::Young));
        workers::run(
            self.workers,
            seed,
            |_| (),
            |_, _, t| match t {
                Task::Region(i) => {
                    let e = extents[i];
                    let mut a = e.first;
                    while a < e.end {
                        let w0 = self.mem.load(a);
                        if is_marked(w0) {
                            self.update_fields(a);
                        }
                        a += self.size(a);
                    }
                }
                Task::Young(k) => {
                    for &y in &young[k..(k + YOUNG_CHUNK).min(young.len())] {
                        self.update_fields(y);
                    }
                }
            },
        );
    }

    fn move_region(&self, e: Extent) {
        let mut a = e.first;
        while a < e.end {
            let w0 = self.mem.load(a);
            let size = self.size(a);
            if is_marked(w0) {
                let dest = self.mem.load(a + 8);
                if dest != a {
                    self.mem.copy_words(a, dest, size);
                }
                self.mem.store(dest, w0 & !MARK_BIT);
                self.mem.store(dest + 8, 0);
                self.starts.record(dest, size);
            }
            a += size;
        }
    }

    /// Moves live old data. Destination regions are claimed in ascending
    /// destination order; a claim waits until every region whose source
    /// overlaps its destination range has been drained. Returns the number
    /// of regions whose data moved.
    pub(super) fn compact(
        &self,
        s: &mut SummaryData,
        extents: &[Extent],
        layout: &OldLayout,
    ) -> u64 {
        let mut order: Vec<usize> = (0..extents.len()).filter(|i| extents[*i].end > 0).collect();
        order.sort_by_key(|i| s.regions[*i].destination);

        // Container guard: a region only drains into its own container.
        for &i in &order {
            let r = &s.regions[i];
            let dest = r.destination.expect("live region");
            let expected = layout
                .segment_at(dest)
                .and_then(|seg| s.planned_owner.get(&seg).copied());
            assert_eq!(
                r.target_container, expected,
                "region {} would drain into a foreign container",
                r.index
            );
        }

        let pos: Vec<usize> = {
            let mut p = vec![usize::MAX; extents.len()];
            for (k, &i) in order.iter().enumerate() {
                p[i] = k;
            }
            p
        };
        // Sources sorted by start for the overlap search.
        let by_start: Vec<usize> = (0..extents.len()).filter(|i| extents[*i].end > 0).collect();
        let max_len = by_start
            .iter()
            .map(|i| extents[*i].end - extents[*i].first)
            .max()
            .unwrap_or(0);
        let blockers: Vec<Vec<usize>> = order
            .iter()
            .map(|&i| {
                let d0 = s.regions[i].destination.expect("live region");
                let d1 = d0 + s.regions[i].live_bytes;
                let hi = by_start.partition_point(|j| extents[*j].first < d1);
                let mut v = Vec::new();
                for &j in by_start[..hi].iter().rev() {
                    if extents[j].first + max_len <= d0 {
                        break;
                    }
                    if j != i && extents[j].end > d0 {
                        v.push(pos[j]);
                    }
                }
                v
            })
            .collect();

        let done: Vec<AtomicBool> = order.iter().map(|_| AtomicBool::new(false)).collect();
        let claims = RegionClaims::new(order.len());
        let next = AtomicUsize::new(0);
        let work = || loop {
            let k = next.fetch_add(1, Ordering::Relaxed);
            if k >= order.len() {
                return;
            }
            if !claims.try_claim(k) {
                continue;
            }
            for &b in &blockers[k] {
                debug_assert!(b < k, "blocker must precede in destination order");
                while !done[b].load(Ordering::Acquire) {
                    std::hint::spin_loop();
                    std::thread::yield_now();
                }
            }
            self.move_region(extents[order[k]]);
            done[k].store(true, Ordering::Release);
        };
        if self.workers <= 1 {
            work();
        } else {
            std::thread::scope(|sc| {
                for _ in 0..self.workers {
                    sc.spawn(work);
                }
            });
        }
        let mut moved = 0;
        for &i in &order {
            let r = &mut s.regions[i];
            r.source_exhausted = true;
            if r.destination != Some(extents[i].first) {
                moved += 1;
            }
        }
        moved
    }

    /// Copies young survivors to their old-generation destinations, or just
    /// clears their headers when they stay.
    pub(super) fn move_young(&self, young: &[u64]) {
        let chunks: Vec<usize> = (0..young.len()).step_by(YOUNG_CHUNK).collect();
        workers::run(
            self.workers,
            chunks,
            |_| (),
            |_, _, k| {
                for &y in &young[k..(k + YOUNG_CHUNK).min(young.len())] {
                    let w0 = self.mem.load(y);
                    let dest = self.mem.load(y + 8);
                    let size = self.size(y);
                    if dest != y {
                        self.mem.copy_words(y, dest, size);
                        self.starts.record(dest, size);
                    }
                    self.mem.store(dest, w0 & !MARK_BIT);
                    self.mem.store(dest + 8, 0);
                }
            },
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn region_claim_has_one_winner() {
        let claims = RegionClaims::new(1);
        let wins = AtomicUsize::new(0);
        std::thread::scope(|s| {
            for _ in 0..8 {
                s.spawn(|| {
                    if claims.try_claim(0) {
                        wins.fetch_add(1, Ordering::Relaxed);
                    }
                });
            }
        });
        assert_eq!(wins.into_inner(), 1);
    }
}
