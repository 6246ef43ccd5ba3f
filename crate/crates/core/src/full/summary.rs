//! Single-threaded summary: destinations for every compaction unit.
//!
//! A unit is a source area that slides into a destination area: the
//! non-bda space onto itself, and each live container segment into the
//! lowest free segment slot of its space. Spilled segments with live data
//! move into the remaining free slots, or stay where they are.

use std::collections::{HashMap, HashSet};

use super::FullCtx;
use crate::full::mark::MarkState;
use crate::layout::{AddrRange, ContainerId, OldLayout, SegmentId, REGION_BYTES};
use crate::object::MARK_BIT;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Region {
    pub index: usize,
    pub range: AddrRange,
    pub live_bytes: u64,
    /// Where the first live object starting in this region goes.
    pub destination: Option<u64>,
    pub source_exhausted: bool,
    /// Container owning this region's segment, if any.
    pub target_container: Option<ContainerId>,
    /// End of the unit area this region belongs to.
    pub(crate) area_end: u64,
}

pub(crate) struct Unit {
    pub area: AddrRange,
    pub dest_base: u64,
    pub live: u64,
    /// Source and destination segment.
    pub segments: Option<(SegmentId, SegmentId)>,
}

pub struct SummaryData {
    pub regions: Vec<Region>,
    pub(crate) units: Vec<Unit>,
    /// Where young survivors go; `None` leaves them in place.
    pub young_dest: Option<u64>,
    pub young_bytes: u64,
    pub released: Vec<SegmentId>,
    pub(crate) dead_containers: Vec<ContainerId>,
    pub(crate) orphaned: Vec<ContainerId>,
    /// Container each destination segment belongs to after compaction.
    pub(crate) planned_owner: HashMap<SegmentId, ContainerId>,
    pub new_nonbda_top: u64,
}

/// Sliding destinations for a run of regions with the given live bytes:
/// each live region starts where the previous live data ended.
pub fn region_destinations(live: &[u64], dest_base: u64) -> Vec<Option<u64>> {
    let mut cursor = dest_base;
    live.iter()
        .map(|&l| {
            (l > 0).then(|| {
                let d = cursor;
                cursor += l;
                d
            })
        })
        .collect()
}

impl FullCtx<'_> {
    fn region_span(&self, area: AddrRange) -> std::ops::Range<usize> {
        if area.is_empty() {
            return 0..0;
        }
        let first = ((area.start - self.old_base) / REGION_BYTES) as usize;
        let last = ((area.end - 1 - self.old_base) / REGION_BYTES) as usize;
        first..last + 1
    }

    pub(super) fn summarize(&self, layout: &mut OldLayout, mark: &MarkState) -> SummaryData {
        let mut regions: Vec<Region> = (0..self.region_count)
            .map(|i| {
                let start = self.old_base + i as u64 * REGION_BYTES;
                Region {
                    index: i,
                    range: AddrRange::new(start, start + REGION_BYTES),
                    live_bytes: mark.region_live[i],
                    destination: None,
                    source_exhausted: false,
                    target_container: None,
                    area_end: start,
                }
            })
            .collect();
        let live_in =
            |r: AddrRange| -> u64 { self.region_span(r).map(|i| mark.region_live[i]).sum() };

        let nb = layout.geometry.old_nonbda.start;
        let nonbda = AddrRange::new(nb, layout.nonbda_top);
        let nonbda_live = live_in(nonbda);
        let mut units = vec![Unit {
            area: nonbda,
            dest_base: nb,
            live: nonbda_live,
            segments: None,
        }];
        let mut released = Vec::new();
        let mut planned_owner = HashMap::new();
        let seg = layout.segment_size();
        let spilled = layout.spilled_segments();

        for sp in 0..layout.spaces.len() {
            let slots = layout.spaces[sp].slot_count();
            let base = layout.spaces[sp].range.start;
            let mut next = 0usize;
            let mut sources: Vec<SegmentId> = (0..slots)
                .filter_map(|i| layout.spaces[sp].slot(i))
                .collect();
            sources.extend(
                spilled
                    .iter()
                    .copied()
                    .filter(|id| layout.segment(*id).space as usize == sp),
            );
            for id in sources {
                let s = layout.segment(id).clone();
                let Some(owner) = s.owner else { continue };
                let live = live_in(s.range);
                if live == 0 {
                    released.push(id);
                    continue;
                }
                let dst = if !s.spilled || next < slots {
                    let d = layout.ensure_slot(sp as u16, next);
                    next += 1;
                    d
                } else {
                    id
                };
                let dest_base = if dst == id {
                    s.range.start
                } else {
                    base + (next as u64 - 1) * seg
                };
                debug_assert_eq!(dest_base, layout.segment(dst).range.start);
                planned_owner.insert(dst, owner);
                units.push(Unit {
                    area: s.range,
                    dest_base,
                    live,
                    segments: Some((id, dst)),
                });
            }
        }

        let released_set: HashSet<SegmentId> = released.iter().copied().collect();
        let mut dead_containers = Vec::new();
        let mut orphaned = Vec::new();
        for c in layout.containers() {
            let parent_live = !c.parent.is_null() && self.mem.load(c.parent.addr()) & MARK_BIT != 0;
            if parent_live {
                continue;
            }
            if layout.chain(c.id).iter().any(|s| !released_set.contains(s)) {
                orphaned.push(c.id);
            } else {
                dead_containers.push(c.id);
            }
        }

        for u in &units {
            let span = self.region_span(u.area);
            let owner = u
                .segments
                .map(|(src, _)| layout.segment(src).owner.expect("owned"));
            let live: Vec<u64> = span.clone().map(|i| mark.region_live[i]).collect();
            for (i, d) in span.zip(region_destinations(&live, u.dest_base)) {
                let r = &mut regions[i];
                r.destination = d;
                r.target_container = owner;
                r.area_end = u.area.end;
            }
        }

        let new_nonbda_top = nb + nonbda_live;
        let young_bytes: u64 = mark.young.iter().map(|y| self.size(*y)).sum();
        let young_dest =
            (new_nonbda_top + young_bytes <= layout.spill_floor).then_some(new_nonbda_top);
        SummaryData {
            regions,
            units,
            young_dest,
            young_bytes,
            released,
            dead_containers,
            orphaned,
            planned_owner,
            new_nonbda_top,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn live_regions_slide_to_the_bottom() {
        let live = [0, 0, 4096, 0, 0, 4096];
        let d = region_destinations(&live, 0);
        assert_eq!(d[2], Some(0));
        assert_eq!(d[5], Some(4096));
        assert_eq!(d.iter().flatten().count(), 2);
    }

    #[test]
    fn partial_regions_pack_back_to_back() {
        let d = region_destinations(&[100, 0, 40, 8], 1000);
        assert_eq!(d, vec![Some(1000), None, Some(1100), Some(1140)]);
    }
}
