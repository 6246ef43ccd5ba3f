//! The managed heap and its mutator interface.

use std::time::Duration;

use crate::barrier::{BlockStartTable, CardTable};
use crate::error::{GcError, Result};
use crate::layout::{AddrRange, BdaConfig, HeapGeometry, Location, OldLayout};
use crate::memory::{Memory, WORD};
use crate::object::{
    header_class, header_word, object_size, ClassDescriptor, ClassId, ClassRegistry, ManagedRef,
    ObjectHeader, PackedEntry, ReferenceQueueEntry, Shape, FIELD_BYTES, HEADER_BYTES,
};
use crate::stats::{GcStats, HeapTotals};

/// Default thread-local allocation buffer size.
pub const TLAB_BYTES: u64 = 64 * 1024;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Mode {
    /// Plain generational heap: no bda-spaces, no reference queue.
    Base,
    #[default]
    Bda,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeapConfig {
    /// Heap size excluding the guard page.
    pub heap_bytes: u64,
    pub young_fraction: f64,
    pub mode: Mode,
    pub bda: BdaConfig,
    pub gc_threads: usize,
    pub tenuring_threshold: u8,
    pub tlab_bytes: u64,
    /// Gang-trace the whole young closure of a queued root instead of
    /// stopping at the delegation level.
    pub full_closure: bool,
    /// Run the heap verifier after every collection.
    pub verify: bool,
}

impl Default for HeapConfig {
    fn default() -> Self {
        HeapConfig {
            heap_bytes: 64 << 20,
            young_fraction: 0.25,
            mode: Mode::Bda,
            bda: BdaConfig::default(),
            gc_threads: std::thread::available_parallelism().map_or(2, |n| n.get().min(8)),
            tenuring_threshold: 2,
            tlab_bytes: TLAB_BYTES,
            full_closure: false,
            verify: false,
        }
    }
}

impl HeapConfig {
    /// The bda settings in effect: base mode ignores the configured classes.
    pub fn effective_bda(&self) -> BdaConfig {
        let mut b = self.bda.clone();
        if self.mode == Mode::Base {
            b.classes.clear();
        }
        b
    }
}

#[derive(Clone, Copy, Debug, Default)]
struct Tlab {
    cur: u64,
    end: u64,
}

pub struct Heap {
    pub(crate) mem: Memory,
    pub(crate) config: HeapConfig,
    pub(crate) classes: ClassRegistry,
    pub(crate) layout: OldLayout,
    pub(crate) cards: CardTable,
    pub(crate) starts: BlockStartTable,
    pub(crate) eden_top: u64,
    pub(crate) from_index: usize,
    pub(crate) from_top: u64,
    tlab: Tlab,
    /// Registered root slots; `None` marks a free handle.
    pub(crate) roots: Vec<Option<u64>>,
    free_roots: Vec<usize>,
    /// Temporaries rooted by the mutator (stack discipline).
    pub(crate) scratch: Vec<u64>,
    pub(crate) queue: Vec<PackedEntry>,
    pub(crate) history: Vec<GcStats>,
    pub(crate) totals: HeapTotals,
    pub(crate) verify_failures: Vec<String>,
}

/// Handle to a root slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RootHandle(usize);

impl Heap {
    pub fn new(config: HeapConfig) -> Result<Self> {
        if config.gc_threads == 0 {
            return Err(GcError::InvalidConfig(
                "gc_threads must be at least 1".into(),
            ));
        }
        if config.tlab_bytes < WORD || !config.tlab_bytes.is_multiple_of(WORD) {
            return Err(GcError::InvalidConfig(
                "tlab size must be a positive word multiple".into(),
            ));
        }
        let bda = config.effective_bda();
        let geometry = HeapGeometry::compute(config.heap_bytes, config.young_fraction, &bda)?;
        let old = geometry.old_range();
        let mem = Memory::new(geometry.heap_end);
        let eden_top = geometry.eden.start;
        let from_top = geometry.survivors[0].start;
        log::debug!(
            "heap: eden {} bytes, old {} bytes, {} bda-spaces, segment {} bytes",
            geometry.eden.len(),
            old.len(),
            geometry.bda_spaces.len(),
            geometry.segment_size
        );
        Ok(Heap {
            mem,
            classes: ClassRegistry::new(&bda.classes),
            layout: OldLayout::new(geometry),
            cards: CardTable::new(old),
            starts: BlockStartTable::new(old),
            eden_top,
            from_index: 0,
            from_top,
            tlab: Tlab::default(),
            roots: Vec::new(),
            free_roots: Vec::new(),
            scratch: Vec::new(),
            queue: Vec::new(),
            history: Vec::new(),
            totals: HeapTotals::default(),
            verify_failures: Vec::new(),
            config,
        })
    }

    pub fn config(&self) -> &HeapConfig {
        &self.config
    }

    pub fn mode(&self) -> Mode {
        self.config.mode
    }

    pub fn register_class(
        &mut self,
        name: &str,
        ref_field_count: usize,
        scalar_bytes: usize,
    ) -> Result<ClassDescriptor> {
        self.classes.register(name, ref_field_count, scalar_bytes)
    }

    pub fn classes(&self) -> &ClassRegistry {
        &self.classes
    }

    // ---- allocation -------------------------------------------------------

    /// Allocates an instance of `class`. Missing reference fields are null,
    /// the scalar payload is zero-padded. Collects (minor, then full) when
    /// eden is exhausted.
    pub fn allocate(
        &mut self,
        class: ClassId,
        refs: &[ManagedRef],
        scalar: &[u8],
    ) -> Result<ManagedRef> {
        let desc = self.classes.get(class)?;
        if refs.len() > desc.ref_field_count {
            return Err(GcError::FieldIndex {
                obj: ManagedRef::NULL,
                index: refs.len(),
                count: desc.ref_field_count,
            });
        }
        if scalar.len() > desc.scalar_bytes {
            return Err(GcError::ScalarRange {
                obj: ManagedRef::NULL,
                offset: 0,
                len: scalar.len(),
                size: desc.scalar_bytes,
            });
        }
        let size = desc.instance_size();
        let bda_space = desc.target_bda_space;
        let nrefs = desc.ref_field_count;
        let eden = self.layout.geometry.eden;
        if size > eden.len() {
            return Err(GcError::ObjectTooLarge {
                size,
                eden: eden.len(),
            });
        }
        self.classes.freeze();

        // Initial refs are rooted across a collection, which may move them.
        let (addr, base) = match self.try_allocate(size) {
            Some(a) => (a, None),
            None => {
                let base = self.scratch.len();
                self.scratch.extend(refs.iter().map(|r| r.0));
                match self.allocate_slow(size) {
                    Ok(a) => (a, Some(base)),
                    Err(e) => {
                        self.scratch.truncate(base);
                        return Err(e);
                    }
                }
            }
        };
        self.mem.store(addr, header_word(class.0, 0));
        self.mem.store(addr + WORD, 0);
        for i in 0..nrefs {
            let v = match (refs.get(i), base) {
                (Some(_), Some(b)) => self.scratch[b + i],
                (Some(r), None) => r.0,
                (None, _) => 0,
            };
            self.mem.store(field_addr(addr, i), v);
        }
        if let Some(b) = base {
            self.scratch.truncate(b);
        }
        let payload = field_addr(addr, nrefs);
        self.mem.zero(payload, addr + size - payload);
        self.mem.write_bytes(payload, scalar);

        self.totals.bytes_allocated += size;
        self.totals.objects_allocated += 1;
        if let Some(space) = bda_space {
            self.queue.push(PackedEntry::new(addr, space));
            self.totals.bda_allocations += 1;
        }
        Ok(ManagedRef(addr))
    }

    fn allocate_slow(&mut self, size: u64) -> Result<u64> {
        self.minor_collect()?;
        if let Some(a) = self.try_allocate(size) {
            return Ok(a);
        }
        self.full_collect()?;
        self.try_allocate(size)
            .ok_or(GcError::OutOfMemory("eden exhausted after full collection"))
    }

    fn try_allocate(&mut self, size: u64) -> Option<u64> {
        if self.tlab.cur + size <= self.tlab.end {
            let a = self.tlab.cur;
            self.tlab.cur += size;
            return Some(a);
        }
        let eden_end = self.layout.geometry.eden.end;
        if size > self.config.tlab_bytes / 2 {
            // Large objects bypass the buffer.
            if self.eden_top + size > eden_end {
                return None;
            }
            let a = self.eden_top;
            self.eden_top += size;
            return Some(a);
        }
        let chunk = self.config.tlab_bytes.min(eden_end - self.eden_top);
        if chunk < size {
            return None;
        }
        self.tlab = Tlab {
            cur: self.eden_top + size,
            end: self.eden_top + chunk,
        };
        let a = self.eden_top;
        self.eden_top += chunk;
        Some(a)
    }

    /// Eden after a collection: empty, no buffer.
    pub(crate) fn reset_eden(&mut self) {
        self.eden_top = self.layout.geometry.eden.start;
        self.tlab = Tlab::default();
    }

    // ---- field access -----------------------------------------------------

    pub(crate) fn shape_of(&self, obj: u64) -> Shape {
        self.classes.shapes()[header_class(self.mem.load(obj)) as usize]
    }

    fn checked_shape(&self, obj: ManagedRef) -> Result<Shape> {
        if obj.is_null() {
            return Err(GcError::NullRef);
        }
        debug_assert!(obj.0 < self.mem.size(), "dangling reference {obj}");
        Ok(self.shape_of(obj.0))
    }

    pub fn read_field(&self, obj: ManagedRef, index: usize) -> Result<ManagedRef> {
        let shape = self.checked_shape(obj)?;
        if index >= shape.refs as usize {
            return Err(GcError::FieldIndex {
                obj,
                index,
                count: shape.refs as usize,
            });
        }
        Ok(ManagedRef(self.mem.load(field_addr(obj.0, index))))
    }

    /// Stores a reference. Stores into old-generation objects dirty the
    /// slot's card.
    pub fn write_field(&self, obj: ManagedRef, index: usize, value: ManagedRef) -> Result<()> {
        let shape = self.checked_shape(obj)?;
        if index >= shape.refs as usize {
            return Err(GcError::FieldIndex {
                obj,
                index,
                count: shape.refs as usize,
            });
        }
        let slot = field_addr(obj.0, index);
        self.mem.store(slot, value.0);
        if self.is_old(obj.0) && self.is_young(value.0) {
            self.cards.dirty_on_store(slot);
        }
        Ok(())
    }

    fn scalar_range(&self, obj: ManagedRef, offset: usize, len: usize) -> Result<u64> {
        let shape = self.checked_shape(obj)?;
        let start = field_addr(obj.0, shape.refs as usize);
        let size = (obj.0 + shape.size - start) as usize;
        let declared = self
            .classes
            .get(ClassId(header_class(self.mem.load(obj.0))))?
            .scalar_bytes;
        debug_assert!(declared <= size);
        if offset + len > declared {
            return Err(GcError::ScalarRange {
                obj,
                offset,
                len,
                size: declared,
            });
        }
        Ok(start + offset as u64)
    }

    pub fn read_scalar(&self, obj: ManagedRef, offset: usize, len: usize) -> Result<Vec<u8>> {
        let a = self.scalar_range(obj, offset, len)?;
        if a % WORD == 0 {
            return Ok(self.mem.read_bytes(a, len));
        }
        let base = a / WORD * WORD;
        let skip = (a - base) as usize;
        Ok(self.mem.read_bytes(base, skip + len)[skip..].to_vec())
    }

    /// Word-aligned scalar write; `offset` must be a multiple of 8.
    pub fn write_scalar(&self, obj: ManagedRef, offset: usize, bytes: &[u8]) -> Result<()> {
        let a = self.scalar_range(obj, offset, bytes.len())?;
        if a % WORD != 0 {
            return Err(GcError::ScalarRange {
                obj,
                offset,
                len: bytes.len(),
                size: offset,
            });
        }
        self.mem.write_bytes(a, bytes);
        Ok(())
    }

    pub fn read_u64(&self, obj: ManagedRef, offset: usize) -> Result<u64> {
        let b = self.read_scalar(obj, offset, 8)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    pub fn write_u64(&self, obj: ManagedRef, offset: usize, v: u64) -> Result<()> {
        self.write_scalar(obj, offset, &v.to_le_bytes())
    }

    pub fn class_of(&self, obj: ManagedRef) -> Result<ClassId> {
        self.checked_shape(obj)?;
        Ok(ClassId(header_class(self.mem.load(obj.0))))
    }

    pub fn field_count(&self, obj: ManagedRef) -> Result<usize> {
        Ok(self.checked_shape(obj)?.refs as usize)
    }

    pub fn size_of(&self, obj: ManagedRef) -> Result<u64> {
        Ok(self.checked_shape(obj)?.size)
    }

    pub fn header(&self, obj: ManagedRef) -> Result<ObjectHeader> {
        self.checked_shape(obj)?;
        Ok(ObjectHeader::decode(
            self.mem.load(obj.0),
            self.mem.load(obj.0 + WORD),
        ))
    }

    // ---- roots ------------------------------------------------------------

    pub fn add_root(&mut self, r: ManagedRef) -> RootHandle {
        if let Some(i) = self.free_roots.pop() {
            self.roots[i] = Some(r.0);
            return RootHandle(i);
        }
        self.roots.push(Some(r.0));
        RootHandle(self.roots.len() - 1)
    }

    pub fn root(&self, h: RootHandle) -> ManagedRef {
        ManagedRef(self.roots[h.0].expect("live root handle"))
    }

    pub fn set_root(&mut self, h: RootHandle, r: ManagedRef) {
        let slot = self.roots[h.0].as_mut().expect("live root handle");
        *slot = r.0;
    }

    pub fn remove_root(&mut self, h: RootHandle) {
        if self.roots[h.0].take().is_some() {
            self.free_roots.push(h.0);
        }
    }

    /// Roots a temporary; pair with [`Heap::pop_temp`].
    pub fn push_temp(&mut self, r: ManagedRef) {
        self.scratch.push(r.0);
    }

    pub fn pop_temp(&mut self) -> ManagedRef {
        ManagedRef(self.scratch.pop().expect("temp stack underflow"))
    }

    /// Current value of the `depth`-th temporary from the top (0 = top).
    pub fn temp(&self, depth: usize) -> ManagedRef {
        ManagedRef(self.scratch[self.scratch.len() - 1 - depth])
    }

    /// All non-null roots: registered slots first, then temporaries.
    pub fn root_refs(&self) -> Vec<ManagedRef> {
        self.roots
            .iter()
            .flatten()
            .chain(self.scratch.iter())
            .filter(|a| **a != 0)
            .map(|a| ManagedRef(*a))
            .collect()
    }

    /// Root values as a flat vector, used by the collectors.
    pub(crate) fn gather_roots(&self) -> Vec<u64> {
        self.roots
            .iter()
            .map(|r| r.unwrap_or(0))
            .chain(self.scratch.iter().copied())
            .collect()
    }

    pub(crate) fn scatter_roots(&mut self, values: &[u64]) {
        let n = self.roots.len();
        for (slot, v) in self.roots.iter_mut().zip(values) {
            if slot.is_some() {
                *slot = Some(*v);
            }
        }
        self.scratch.copy_from_slice(&values[n..]);
    }

    // ---- queries ----------------------------------------------------------

    pub fn reference_queue(&self) -> Vec<ReferenceQueueEntry> {
        self.queue.iter().map(|e| e.unpack()).collect()
    }

    pub fn queue_len(&self) -> usize {
        self.queue.len()
    }

    pub fn geometry(&self) -> &HeapGeometry {
        &self.layout.geometry
    }

    pub fn layout(&self) -> &OldLayout {
        &self.layout
    }

    pub fn cards(&self) -> &CardTable {
        &self.cards
    }

    pub fn locate(&self, r: ManagedRef) -> Location {
        self.layout.locate(r.0, self.from_index)
    }

    pub fn dump_geometry(&self) -> String {
        self.layout.dump(self.from_index)
    }

    #[inline]
    pub fn is_young(&self, addr: u64) -> bool {
        self.layout.geometry.young_range().contains(addr)
    }

    #[inline]
    pub fn is_old(&self, addr: u64) -> bool {
        addr >= self.layout.geometry.old_base()
    }

    pub fn from_space(&self) -> AddrRange {
        self.layout.geometry.survivors[self.from_index]
    }

    pub fn young_used(&self) -> u64 {
        let g = &self.layout.geometry;
        (self.eden_top - g.eden.start) + (self.from_top - self.from_space().start)
    }

    pub fn last_gc(&self) -> Option<&GcStats> {
        self.history.last()
    }

    pub fn gc_history(&self) -> &[GcStats] {
        &self.history
    }

    pub fn totals(&self) -> &HeapTotals {
        &self.totals
    }

    pub fn total_pause(&self) -> Duration {
        self.totals.total_pause
    }

    /// Messages from the post-collection verifier; empty when all checks
    /// passed (or verification is off).
    pub fn verify_failures(&self) -> &[String] {
        &self.verify_failures
    }

    pub(crate) fn finish_collection(&mut self, stats: GcStats) -> GcStats {
        self.totals.record(&stats);
        self.history.push(stats.clone());
        if self.config.verify {
            let failures = self.verify();
            for f in &failures {
                log::error!("heap verification: {f}");
            }
            self.verify_failures.extend(failures);
        }
        stats
    }

    // ---- raw object helpers -----------------------------------------------

    #[inline]
    pub(crate) fn size_at(&self, obj: u64) -> u64 {
        object_size(self.classes.shapes(), self.mem.load(obj))
    }

    /// Object starts in `[start, end)`, which must be parsable.
    pub(crate) fn objects_in(&self, range: AddrRange) -> Vec<u64> {
        let mut out = Vec::new();
        let mut a = range.start;
        while a < range.end {
            out.push(a);
            a += self.size_at(a);
        }
        out
    }

    /// Old-generation areas holding objects: the non-bda space below its
    /// top, each carved spilled segment and each bda-space below its top.
    pub(crate) fn old_areas(&self) -> Vec<AddrRange> {
        let l = &self.layout;
        let mut v = vec![AddrRange::new(l.geometry.old_nonbda.start, l.nonbda_top)];
        v.push(l.spill_range());
        for s in &l.spaces {
            v.push(AddrRange::new(s.range.start, s.top));
        }
        v.retain(|r| !r.is_empty());
        v
    }

    /// Non-filler objects in the old generation, in address order.
    pub fn old_objects(&self) -> Vec<ManagedRef> {
        self.old_areas()
            .into_iter()
            .flat_map(|r| self.objects_in(r))
            .filter(|a| header_class(self.mem.load(*a)) != 0)
            .map(ManagedRef)
            .collect()
    }

    /// Reference field values of a raw object.
    pub(crate) fn fields_of(&self, obj: u64) -> impl Iterator<Item = u64> + '_ {
        let n = self.shape_of(obj).refs as usize;
        (0..n).map(move |i| self.mem.load(field_addr(obj, i)))
    }
}

#[inline]
pub(crate) fn field_addr(obj: u64, index: usize) -> u64 {
    obj + HEADER_BYTES + index as u64 * FIELD_BYTES
}
