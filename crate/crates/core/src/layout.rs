//! Heap geometry: young spaces, the non-bda old space, bda-spaces with their
//! containers and segments, and the per-space segment pool.
//!
//! ```text
//! | guard | eden | survivor 0 | survivor 1 | old non-bda ... spill | bda 0 | dead | bda 1 | dead |
//! ```
//!
//! Segments that do not fit in their bda-space are carved from the top of the
//! non-bda space, growing downwards ("spilled"). They keep their container
//! identity.

use std::fmt::Write as _;

use crate::error::{GcError, Result};
use crate::memory::{align_down, align_up};
use crate::object::{ManagedRef, SpaceId, FIELD_BYTES, HEADER_BYTES};

/// Compaction region size, segment granularity and simulated page size.
pub const REGION_BYTES: u64 = 4096;
/// Unmapped page at address 0 so that null is never a valid object.
pub const GUARD_BYTES: u64 = REGION_BYTES;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct AddrRange {
    pub start: u64,
    pub end: u64,
}

impl AddrRange {
    pub const fn new(start: u64, end: u64) -> Self {
        AddrRange { start, end }
    }

    #[inline]
    pub fn contains(&self, addr: u64) -> bool {
        addr >= self.start && addr < self.end
    }

    #[inline]
    pub fn len(&self) -> u64 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

/// Launch-time parameters of the bda heap.
#[derive(Clone, Debug, PartialEq)]
pub struct BdaConfig {
    /// Fully-qualified names of the storage types handled as bda-classes.
    pub classes: Vec<String>,
    /// Fraction of the old generation given to bda-spaces.
    pub bda_ratio: f64,
    /// CF: number of segments an estimated container is split into.
    pub container_fraction: u64,
    /// DL: expected levels of delegation below a container parent.
    pub delegation_level: u64,
    /// DNF: expected fields per element object.
    pub default_node_fields: u64,
    /// NF: fields per node.
    pub node_fields: u64,
    /// CS: expected number of elements per container.
    pub container_size: u64,
}

impl Default for BdaConfig {
    fn default() -> Self {
        BdaConfig {
            classes: Vec::new(),
            bda_ratio: 0.5,
            container_fraction: 1,
            delegation_level: 2,
            default_node_fields: 1,
            node_fields: 2,
            container_size: 25_000,
        }
    }
}

impl BdaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.bda_ratio) {
            return Err(GcError::InvalidConfig(format!(
                "bda ratio must be in [0, 1), got {}",
                self.bda_ratio
            )));
        }
        if self.container_fraction == 0 {
            return Err(GcError::InvalidConfig(
                "container fraction must be >= 1".into(),
            ));
        }
        let mut seen = std::collections::HashSet::new();
        for c in &self.classes {
            if c.is_empty() || !seen.insert(c) {
                return Err(GcError::InvalidConfig(format!(
                    "bad or repeated bda class `{c}`"
                )));
            }
        }
        Ok(())
    }
}

/// Expected bytes of one container:
/// `(h + NF*f) * CS + DL * CS * (h + DNF*f)`.
pub fn estimate_container_bytes(config: &BdaConfig) -> u64 {
    let node = HEADER_BYTES + config.node_fields * FIELD_BYTES;
    let element = HEADER_BYTES + config.default_node_fields * FIELD_BYTES;
    node * config.container_size + config.delegation_level * config.container_size * element
}

/// Container estimate divided by CF, rounded up to a whole number of regions
/// (at least one).
pub fn segment_size(config: &BdaConfig) -> u64 {
    let cf = config.container_fraction.max(1);
    let per_segment = estimate_container_bytes(config).div_ceil(cf);
    align_up(per_segment, REGION_BYTES).max(REGION_BYTES)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BdaSpaceGeometry {
    pub id: SpaceId,
    pub class_name: String,
    /// Bytes usable for segments: a whole number of segments.
    pub range: AddrRange,
    /// The space's share of the old generation, including the unusable tail.
    pub reserved: AddrRange,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeapGeometry {
    pub eden: AddrRange,
    pub survivors: [AddrRange; 2],
    pub old_nonbda: AddrRange,
    pub bda_spaces: Vec<BdaSpaceGeometry>,
    pub segment_size: u64,
    pub heap_end: u64,
}

impl HeapGeometry {
    /// Lays out a heap of `heap_bytes` (excluding the guard page). Survivor
    /// spaces are each a tenth of the young generation.
    pub fn compute(heap_bytes: u64, young_fraction: f64, bda: &BdaConfig) -> Result<Self> {
        bda.validate()?;
        if !(young_fraction > 0.0 && young_fraction < 1.0) {
            return Err(GcError::InvalidConfig(format!(
                "young fraction must be in (0, 1), got {young_fraction}"
            )));
        }
        let heap = align_down(heap_bytes, REGION_BYTES);
        let young = align_down((heap as f64 * young_fraction) as u64, REGION_BYTES);
        let survivor = align_down(young / 10, REGION_BYTES).max(REGION_BYTES);
        if young < 3 * REGION_BYTES || young <= 2 * survivor {
            return Err(GcError::InvalidConfig(format!(
                "young generation too small: {young} bytes"
            )));
        }
        let eden_bytes = young - 2 * survivor;
        let old = heap - young;
        let seg = segment_size(bda);
        let n = bda.classes.len() as u64;
        let bda_total = if n == 0 {
            0
        } else {
            align_down((old as f64 * bda.bda_ratio) as u64, REGION_BYTES)
        };
        let per_space = if n == 0 {
            0
        } else {
            align_down(bda_total / n, REGION_BYTES)
        };
        let nonbda = old - per_space * n;
        if nonbda < REGION_BYTES {
            return Err(GcError::InvalidConfig(
                "no room left for the non-bda old space".into(),
            ));
        }

        let eden = AddrRange::new(GUARD_BYTES, GUARD_BYTES + eden_bytes);
        let s0 = AddrRange::new(eden.end, eden.end + survivor);
        let s1 = AddrRange::new(s0.end, s0.end + survivor);
        let old_nonbda = AddrRange::new(s1.end, s1.end + nonbda);
        let mut cursor = old_nonbda.end;
        let mut bda_spaces = Vec::new();
        for (i, class) in bda.classes.iter().enumerate() {
            let usable = per_space / seg * seg;
            bda_spaces.push(BdaSpaceGeometry {
                id: i as SpaceId,
                class_name: class.clone(),
                range: AddrRange::new(cursor, cursor + usable),
                reserved: AddrRange::new(cursor, cursor + per_space),
            });
            cursor += per_space;
        }
        Ok(HeapGeometry {
            eden,
            survivors: [s0, s1],
            old_nonbda,
            bda_spaces,
            segment_size: seg,
            heap_end: cursor,
        })
    }

    /// Start of the old generation (and of the card table).
    pub fn old_base(&self) -> u64 {
        self.old_nonbda.start
    }

    pub fn old_range(&self) -> AddrRange {
        AddrRange::new(self.old_nonbda.start, self.heap_end)
    }

    pub fn young_range(&self) -> AddrRange {
        AddrRange::new(self.eden.start, self.survivors[1].end)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SegmentId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ContainerId(pub u32);

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Segment {
    pub id: SegmentId,
    pub space: SpaceId,
    pub range: AddrRange,
    /// End of the objects placed in this segment.
    pub top: u64,
    pub owner: Option<ContainerId>,
    pub next: Option<SegmentId>,
    pub spilled: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Container {
    pub id: ContainerId,
    pub space: SpaceId,
    /// The storage instance; null once the parent died with children still live.
    pub parent: ManagedRef,
    pub head: Option<SegmentId>,
    pub tail: Option<SegmentId>,
    /// Set when gang promotion had to fall back to ordinary promotion.
    pub degraded: bool,
}

#[derive(Clone, Debug)]
pub struct BdaSpace {
    pub id: SpaceId,
    pub range: AddrRange,
    /// End of the highest owned segment.
    pub top: u64,
    /// End of the highest segment ever carved.
    pub carved: u64,
    /// LIFO free list.
    pub pool: Vec<SegmentId>,
    slots: Vec<Option<SegmentId>>,
}

impl BdaSpace {
    pub fn slot_count(&self) -> usize {
        self.slots.len()
    }

    pub fn slot(&self, index: usize) -> Option<SegmentId> {
        self.slots[index]
    }
}

/// Classification of a heap address.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Location {
    Eden,
    From,
    To,
    OldNonBda,
    Bda {
        space: SpaceId,
        segment: Option<SegmentId>,
        container: Option<ContainerId>,
    },
    Spilled {
        space: SpaceId,
        segment: SegmentId,
        container: Option<ContainerId>,
    },
    Unmapped,
}

/// Mutable state of the old generation.
#[derive(Clone, Debug)]
pub struct OldLayout {
    pub geometry: HeapGeometry,
    pub nonbda_top: u64,
    /// Lowest address of the spill area at the top of the non-bda space.
    pub spill_floor: u64,
    pub spaces: Vec<BdaSpace>,
    segments: Vec<Segment>,
    containers: Vec<Option<Container>>,
    /// Spill slots counted downwards from the end of the non-bda space.
    spill_slots: Vec<Option<SegmentId>>,
    spill_free: Vec<SegmentId>,
}

impl OldLayout {
    pub fn new(geometry: HeapGeometry) -> Self {
        let seg = geometry.segment_size;
        let spaces = geometry
            .bda_spaces
            .iter()
            .map(|g| BdaSpace {
                id: g.id,
                range: g.range,
                top: g.range.start,
                carved: g.range.start,
                pool: Vec::new(),
                slots: vec![None; (g.range.len() / seg) as usize],
            })
            .collect();
        OldLayout {
            nonbda_top: geometry.old_nonbda.start,
            spill_floor: geometry.old_nonbda.end,
            geometry,
            spaces,
            segments: Vec::new(),
            containers: Vec::new(),
            spill_slots: Vec::new(),
            spill_free: Vec::new(),
        }
    }

    pub fn segment_size(&self) -> u64 {
        self.geometry.segment_size
    }

    pub fn segment(&self, id: SegmentId) -> &Segment {
        &self.segments[id.0 as usize]
    }

    pub(crate) fn segment_mut(&mut self, id: SegmentId) -> &mut Segment {
        &mut self.segments[id.0 as usize]
    }

    pub fn container(&self, id: ContainerId) -> Option<&Container> {
        self.containers.get(id.0 as usize).and_then(|c| c.as_ref())
    }

    pub(crate) fn container_mut(&mut self, id: ContainerId) -> Option<&mut Container> {
        self.containers
            .get_mut(id.0 as usize)
            .and_then(|c| c.as_mut())
    }

    pub fn containers(&self) -> impl Iterator<Item = &Container> {
        self.containers.iter().flatten()
    }

    /// Segments currently owned by a container, in no particular order.
    pub fn owned_segments(&self) -> impl Iterator<Item = &Segment> {
        self.segments.iter().filter(|s| s.owner.is_some())
    }

    /// Spilled segments currently carved, lowest address first.
    pub fn spilled_segments(&self) -> Vec<SegmentId> {
        let mut v: Vec<SegmentId> = self.spill_slots.iter().flatten().copied().collect();
        v.sort_by_key(|s| self.segment(*s).range.start);
        v
    }

    pub fn spill_range(&self) -> AddrRange {
        AddrRange::new(self.spill_floor, self.geometry.old_nonbda.end)
    }

    pub fn nonbda_free(&self) -> u64 {
        self.spill_floor - self.nonbda_top
    }

    /// Externally visible top of the old generation: the last bda-space top,
    /// or the non-bda top when there are no bda-spaces.
    pub fn old_top(&self) -> u64 {
        self.spaces.last().map_or(self.nonbda_top, |s| s.top)
    }

    pub fn new_container(&mut self, space: SpaceId, parent: ManagedRef) -> ContainerId {
        let id = ContainerId(self.containers.len() as u32);
        self.containers.push(Some(Container {
            id,
            space,
            parent,
            head: None,
            tail: None,
            degraded: false,
        }));
        id
    }

    pub(crate) fn remove_container(&mut self, id: ContainerId) {
        debug_assert!(self.container(id).is_some_and(|c| c.head.is_none()));
        self.containers[id.0 as usize] = None;
    }

    /// Segment ids of a container's chain, head first.
    pub fn chain(&self, id: ContainerId) -> Vec<SegmentId> {
        let mut out = Vec::new();
        let mut cur = self.container(id).and_then(|c| c.head);
        while let Some(s) = cur {
            out.push(s);
            assert!(
                out.len() <= self.segments.len(),
                "cycle in segment chain of container {}",
                id.0
            );
            cur = self.segment(s).next;
        }
        out
    }

    fn new_segment(&mut self, space: SpaceId, base: u64, spilled: bool) -> SegmentId {
        let id = SegmentId(self.segments.len() as u32);
        let size = self.segment_size();
        self.segments.push(Segment {
            id,
            space,
            range: AddrRange::new(base, base + size),
            top: base,
            owner: None,
            next: None,
            spilled,
        });
        id
    }

    /// Segment record for slot `index` of `space`, carving it if needed.
    pub(crate) fn ensure_slot(&mut self, space: SpaceId, index: usize) -> SegmentId {
        if let Some(id) = self.spaces[space as usize].slots[index] {
            return id;
        }
        let seg = self.segment_size();
        let base = self.spaces[space as usize].range.start + index as u64 * seg;
        let id = self.new_segment(space, base, false);
        let s = &mut self.spaces[space as usize];
        s.slots[index] = Some(id);
        s.carved = s.carved.max(base + seg);
        id
    }

    /// Hands a segment to `container` and links it at the chain tail: a pooled
    /// segment if any, else a fresh one at the space's carve cursor, else a
    /// spilled one from the non-bda space provided at least `spill_reserve`
    /// bytes of non-bda space stay free.
    pub fn allocate_segment(
        &mut self,
        space: SpaceId,
        container: ContainerId,
        spill_reserve: u64,
    ) -> Result<SegmentId> {
        match self.container(container) {
            Some(c) if c.space == space => {}
            _ => return Err(GcError::ForeignContainer(container.0, space)),
        }
        let seg = self.segment_size();
        let id = if let Some(id) = self.spaces[space as usize].pool.pop() {
            id
        } else if self.spaces[space as usize].carved + seg <= self.spaces[space as usize].range.end
        {
            let s = &self.spaces[space as usize];
            let index = ((s.carved - s.range.start) / seg) as usize;
            self.ensure_slot(space, index)
        } else if let Some(id) = self.spill_free.pop() {
            self.segment_mut(id).space = space;
            id
        } else if self.spill_floor >= self.nonbda_top + seg + spill_reserve {
            self.spill_floor -= seg;
            let id = self.new_segment(space, self.spill_floor, true);
            self.spill_slots.push(Some(id));
            id
        } else {
            return Err(GcError::OutOfMemory("no segment available for container"));
        };
        self.link_tail(container, id);
        Ok(id)
    }

    fn link_tail(&mut self, container: ContainerId, id: SegmentId) {
        let end = {
            let s = self.segment_mut(id);
            s.owner = Some(container);
            s.next = None;
            s.top = s.range.start;
            s.range.end
        };
        let c = self.container_mut(container).expect("live container");
        let prev_tail = c.tail.replace(id);
        if c.head.is_none() {
            c.head = Some(id);
        }
        if let Some(t) = prev_tail {
            self.segment_mut(t).next = Some(id);
        }
        if !self.segment(id).spilled {
            let space = self.segment(id).space as usize;
            let s = &mut self.spaces[space];
            s.top = s.top.max(end);
        }
    }

    /// Unlinks an owned segment from its container and returns it to the
    /// pool (or to the spill area). The caller guarantees it holds no live
    /// objects.
    pub fn release_segment(&mut self, id: SegmentId) -> Result<()> {
        self.detach_segment(id)?;
        let s = self.segment(id);
        if s.spilled {
            self.spill_free.push(id);
            self.reclaim_spill();
        } else {
            let space = s.space;
            self.spaces[space as usize].pool.push(id);
            self.recompute_top(space);
        }
        Ok(())
    }

    /// Unlinks a segment from its owner's chain without pooling it. Callers
    /// releasing many segments follow up with `rebuild_pools`.
    pub(crate) fn detach_segment(&mut self, id: SegmentId) -> Result<()> {
        let owner = self
            .segment(id)
            .owner
            .ok_or(GcError::SegmentNotOwned(id.0))?;
        let next = self.segment(id).next;
        let chain = self.chain(owner);
        let pos = chain
            .iter()
            .position(|s| *s == id)
            .expect("segment in owner chain");
        {
            let c = self.container_mut(owner).expect("owner exists");
            if pos == 0 {
                c.head = next;
            }
            if c.tail == Some(id) {
                c.tail = if pos == 0 { None } else { Some(chain[pos - 1]) };
            }
        }
        if pos > 0 {
            self.segment_mut(chain[pos - 1]).next = next;
        }
        let s = self.segment_mut(id);
        s.owner = None;
        s.next = None;
        s.top = s.range.start;
        Ok(())
    }

    /// Raises the spill floor past free spilled segments at the bottom of the
    /// spill area.
    fn reclaim_spill(&mut self) {
        while let Some(Some(last)) = self.spill_slots.last().copied() {
            if self.segment(last).owner.is_some() {
                break;
            }
            self.spill_slots.pop();
            self.spill_free.retain(|s| *s != last);
            self.spill_floor += self.segment_size();
        }
    }

    pub(crate) fn recompute_top(&mut self, space: SpaceId) {
        let seg = self.segment_size();
        let s = &self.spaces[space as usize];
        let mut top = s.range.start;
        for (i, slot) in s.slots.iter().enumerate() {
            if let Some(id) = slot {
                if self.segments[id.0 as usize].owner.is_some() {
                    top = s.range.start + (i as u64 + 1) * seg;
                }
            }
        }
        self.spaces[space as usize].top = top;
    }

    /// Moves ownership and chain position of `src` onto the free segment
    /// `dst`; `src` becomes free (not yet pooled).
    pub(crate) fn transfer_segment(&mut self, src: SegmentId, dst: SegmentId) {
        if src == dst {
            return;
        }
        let (owner, next, top_off, space) = {
            let s = self.segment(src);
            (
                s.owner.expect("source owned"),
                s.next,
                s.top - s.range.start,
                s.space,
            )
        };
        debug_assert!(self.segment(dst).owner.is_none());
        let chain = self.chain(owner);
        let pos = chain.iter().position(|s| *s == src).expect("in chain");
        {
            let d = self.segment_mut(dst);
            d.owner = Some(owner);
            d.next = next;
            d.top = d.range.start + top_off;
            d.space = space;
        }
        if pos > 0 {
            self.segment_mut(chain[pos - 1]).next = Some(dst);
        }
        let c = self.container_mut(owner).expect("owner");
        if c.head == Some(src) {
            c.head = Some(dst);
        }
        if c.tail == Some(src) {
            c.tail = Some(dst);
        }
        let s = self.segment_mut(src);
        s.owner = None;
        s.next = None;
        s.top = s.range.start;
    }

    /// After compaction: every carved, unowned in-space segment goes to the
    /// pool (lowest address popped first), free spilled segments are
    /// reclaimed and space tops are recomputed.
    pub(crate) fn rebuild_pools(&mut self) {
        for sp in 0..self.spaces.len() {
            let free: Vec<SegmentId> = self.spaces[sp]
                .slots
                .iter()
                .flatten()
                .copied()
                .filter(|id| self.segments[id.0 as usize].owner.is_none())
                .collect();
            self.spaces[sp].pool = free.into_iter().rev().collect();
            self.recompute_top(sp as SpaceId);
        }
        let free_spill: Vec<SegmentId> = self
            .spill_slots
            .iter()
            .flatten()
            .copied()
            .filter(|id| self.segments[id.0 as usize].owner.is_none())
            .collect();
        self.spill_free = free_spill;
        self.reclaim_spill();
    }

    /// Segment covering `addr`, if the address is in a carved segment.
    pub fn segment_at(&self, addr: u64) -> Option<SegmentId> {
        let seg = self.segment_size();
        for s in &self.spaces {
            if s.range.contains(addr) {
                return s.slots[((addr - s.range.start) / seg) as usize];
            }
        }
        let end = self.geometry.old_nonbda.end;
        if addr >= self.spill_floor && addr < end {
            return self.spill_slots[((end - 1 - addr) / seg) as usize];
        }
        None
    }

    pub fn locate(&self, addr: u64, from_index: usize) -> Location {
        let g = &self.geometry;
        if g.eden.contains(addr) {
            return Location::Eden;
        }
        if g.survivors[from_index].contains(addr) {
            return Location::From;
        }
        if g.survivors[1 - from_index].contains(addr) {
            return Location::To;
        }
        if g.old_nonbda.contains(addr) {
            if addr >= self.spill_floor {
                if let Some(id) = self.segment_at(addr) {
                    let s = self.segment(id);
                    return Location::Spilled {
                        space: s.space,
                        segment: id,
                        container: s.owner,
                    };
                }
            }
            return Location::OldNonBda;
        }
        for s in &self.spaces {
            if s.range.contains(addr) {
                let segment = self.segment_at(addr);
                return Location::Bda {
                    space: s.id,
                    segment,
                    container: segment.and_then(|id| self.segment(id).owner),
                };
            }
        }
        Location::Unmapped
    }

    /// One line per space and segment.
    pub fn dump(&self, from_index: usize) -> String {
        let g = &self.geometry;
        let mut out = String::new();
        let line = |out: &mut String, name: &str, r: AddrRange, top: u64| {
            let _ = writeln!(
                out,
                "{name:<12} [{:#012x}, {:#012x}) top={top:#012x}",
                r.start, r.end
            );
        };
        line(&mut out, "eden", g.eden, g.eden.start);
        line(
            &mut out,
            "from",
            g.survivors[from_index],
            g.survivors[from_index].start,
        );
        line(
            &mut out,
            "to",
            g.survivors[1 - from_index],
            g.survivors[1 - from_index].start,
        );
        line(&mut out, "old-nonbda", g.old_nonbda, self.nonbda_top);
        let _ = writeln!(out, "spill-floor  {:#012x}", self.spill_floor);
        for s in &self.spaces {
            line(&mut out, &format!("bda-space {}", s.id), s.range, s.top);
        }
        for seg in &self.segments {
            let carved = if seg.spilled {
                self.spill_slots.contains(&Some(seg.id))
            } else {
                true
            };
            if !carved {
                continue;
            }
            let _ = writeln!(
                out,
                "  segment {:<5} space={} [{:#012x}, {:#012x}) top={:#012x} owner={} next={}{}",
                seg.id.0,
                seg.space,
                seg.range.start,
                seg.range.end,
                seg.top,
                seg.owner.map_or("-".to_string(), |c| c.0.to_string()),
                seg.next.map_or("-".to_string(), |n| n.0.to_string()),
                if seg.spilled { " spilled" } else { "" },
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(nf: u64, cs: u64, dl: u64, dnf: u64, cf: u64) -> BdaConfig {
        BdaConfig {
            node_fields: nf,
            container_size: cs,
            delegation_level: dl,
            default_node_fields: dnf,
            container_fraction: cf,
            ..BdaConfig::default()
        }
    }

    #[test]
    fn container_estimate_examples() {
        // (16 + 2*8) * 25000 + 1 * 25000 * (16 + 1*8)
        let hand = (16 + 2 * 8) * 25_000 + 25_000 * (16 + 8);
        assert_eq!(hand, 1_400_000);
        assert_eq!(estimate_container_bytes(&cfg(2, 25_000, 1, 1, 1)), hand);
        assert_eq!(estimate_container_bytes(&cfg(2, 0, 1, 1, 1)), 0);
        assert_eq!(estimate_container_bytes(&cfg(0, 1, 0, 0, 1)), 16);
    }

    #[test]
    fn segment_size_examples() {
        assert_eq!(segment_size(&cfg(2, 25_000, 1, 1, 1)), 1_400_832);
        // ceil(1_400_000 / 4) = 350_000 -> 86 regions
        assert_eq!(segment_size(&cfg(2, 25_000, 1, 1, 4)), 352_256);
        assert_eq!(segment_size(&cfg(2, 10, 1, 1, 1000)), 4096);
        assert_eq!(segment_size(&cfg(2, 0, 1, 1, 1)), 4096);
    }

    #[test]
    fn invalid_ratio_rejected() {
        let bad = BdaConfig {
            bda_ratio: 1.5,
            ..BdaConfig::default()
        };
        assert!(matches!(bad.validate(), Err(GcError::InvalidConfig(_))));
    }

    fn layout_with(heap: u64, classes: usize, cs: u64) -> OldLayout {
        let bda = BdaConfig {
            classes: (0..classes).map(|i| format!("C{i}")).collect(),
            container_size: cs,
            ..BdaConfig::default()
        };
        OldLayout::new(HeapGeometry::compute(heap, 0.25, &bda).unwrap())
    }

    fn small_layout(classes: usize, cs: u64) -> OldLayout {
        layout_with(1 << 20, classes, cs)
    }

    #[test]
    fn geometry_is_disjoint_and_ordered() {
        let l = small_layout(2, 10);
        let g = &l.geometry;
        assert_eq!(g.survivors[0].len(), g.survivors[1].len());
        let mut ranges = vec![g.eden, g.survivors[0], g.survivors[1], g.old_nonbda];
        ranges.extend(g.bda_spaces.iter().map(|s| s.reserved));
        for w in ranges.windows(2) {
            assert_eq!(w[0].end, w[1].start);
        }
        let old = g.heap_end - g.old_nonbda.start;
        let bda: u64 = g.bda_spaces.iter().map(|s| s.reserved.len()).sum();
        assert!(bda <= (old as f64 * 0.5) as u64);
        assert_eq!(bda % REGION_BYTES, 0);
    }

    #[test]
    fn fresh_segment_bumps_top() {
        let mut l = small_layout(1, 10);
        let c = l.new_container(0, ManagedRef(0x1000));
        let before = l.spaces[0].top;
        let s = l.allocate_segment(0, c, 0).unwrap();
        assert_eq!(l.segment(s).range.start, before);
        assert_eq!(l.spaces[0].top, before + l.segment_size());
    }

    #[test]
    fn pooled_segment_is_reused() {
        let mut l = small_layout(1, 10);
        let c = l.new_container(0, ManagedRef(0x1000));
        let s = l.allocate_segment(0, c, 0).unwrap();
        l.release_segment(s).unwrap();
        assert_eq!(l.spaces[0].pool, vec![s]);
        let again = l.allocate_segment(0, c, 0).unwrap();
        assert_eq!(again, s);
        assert!(l.spaces[0].pool.is_empty());
    }

    #[test]
    fn double_release_is_an_error() {
        let mut l = small_layout(1, 10);
        let c = l.new_container(0, ManagedRef(0x1000));
        let s = l.allocate_segment(0, c, 0).unwrap();
        l.release_segment(s).unwrap();
        assert_eq!(l.release_segment(s), Err(GcError::SegmentNotOwned(s.0)));
    }

    #[test]
    fn releasing_middle_of_chain_relinks() {
        let mut l = small_layout(1, 10);
        let c = l.new_container(0, ManagedRef(0x1000));
        let segs: Vec<_> = (0..3)
            .map(|_| l.allocate_segment(0, c, 0).unwrap())
            .collect();
        assert_eq!(l.chain(c), segs);
        l.release_segment(segs[1]).unwrap();
        assert_eq!(l.chain(c), vec![segs[0], segs[2]]);
        assert_eq!(l.segment(segs[0]).next, Some(segs[2]));
    }

    #[test]
    fn exhausted_space_spills_into_nonbda() {
        let mut l = small_layout(1, 10);
        let c = l.new_container(0, ManagedRef(0x1000));
        let slots = l.spaces[0].slot_count();
        for _ in 0..slots {
            let s = l.allocate_segment(0, c, 0).unwrap();
            assert!(!l.segment(s).spilled);
        }
        let s = l.allocate_segment(0, c, 0).unwrap();
        let seg = l.segment(s).clone();
        assert!(seg.spilled);
        assert!(l.geometry.old_nonbda.contains(seg.range.start));
        assert_eq!(seg.range.end, l.geometry.old_nonbda.end);
        assert_eq!(
            l.locate(seg.range.start, 0),
            Location::Spilled {
                space: 0,
                segment: s,
                container: Some(c)
            }
        );
        l.release_segment(s).unwrap();
        assert_eq!(l.spill_floor, l.geometry.old_nonbda.end);
    }

    #[test]
    fn locate_boundaries() {
        // 8 KiB segments in 180 KiB shares leave a 4 KiB dead tail per space.
        let mut l = layout_with(1_000_000, 2, 100);
        let c = l.new_container(1, ManagedRef(0x1000));
        let s = l.allocate_segment(1, c, 0).unwrap();
        let g = l.geometry.clone();
        assert_eq!(g.segment_size, 8192);
        assert!(g.bda_spaces[0].reserved.end > g.bda_spaces[0].range.end);
        assert_eq!(l.locate(0, 0), Location::Unmapped);
        assert_eq!(l.locate(g.eden.start, 0), Location::Eden);
        assert_eq!(l.locate(g.eden.end, 0), Location::From);
        assert_eq!(l.locate(g.survivors[0].start, 1), Location::To);
        assert_eq!(l.locate(g.old_nonbda.end - 8, 0), Location::OldNonBda);
        assert_eq!(
            l.locate(g.bda_spaces[1].range.start, 0),
            Location::Bda {
                space: 1,
                segment: Some(s),
                container: Some(c)
            }
        );
        assert_eq!(
            l.locate(g.bda_spaces[0].range.start, 0),
            Location::Bda {
                space: 0,
                segment: None,
                container: None
            }
        );
        assert_eq!(l.locate(g.heap_end, 0), Location::Unmapped);
        let mut dead = 0;
        for addr in (0..g.heap_end + 64).step_by(8) {
            let loc = l.locate(addr, 0);
            let in_dead_tail = g
                .bda_spaces
                .iter()
                .any(|sp| addr >= sp.range.end && addr < sp.reserved.end);
            if in_dead_tail || addr < g.eden.start || addr >= g.heap_end {
                assert_eq!(loc, Location::Unmapped, "{addr:#x}");
                dead += 1;
            } else {
                assert_ne!(loc, Location::Unmapped, "{addr:#x}");
            }
        }
        assert!(dead > 0);
    }
}
