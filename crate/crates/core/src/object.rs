//! Managed object layout and the class registry.
//!
//! Every object starts with a two-word header:
//!
//! ```text
//! word 0: [ 63..41 unused | 40 mark | 39..32 age | 31..0 class id ]
//! word 1: forwarding address (0 = none, 1 = copy in progress)
//! ```
//!
//! followed by `ref_field_count` reference words and the scalar payload.
//! Class id 0 is reserved for filler objects, which store their own byte size
//! in the upper half of word 0 and may be a single word long.

use std::collections::HashMap;
use std::fmt;

use crate::error::{GcError, Result};
use crate::memory::{align_up, WORD};

/// Header size in bytes.
pub const HEADER_BYTES: u64 = 16;
/// Size of one reference field.
pub const FIELD_BYTES: u64 = 8;
/// Object alignment.
pub const OBJECT_ALIGN: u64 = 8;

pub(crate) const FILLER_CLASS: u32 = 0;
pub(crate) const MARK_BIT: u64 = 1 << 40;
pub(crate) const AGE_SHIFT: u32 = 32;
pub(crate) const AGE_MASK: u64 = 0xff << AGE_SHIFT;
pub(crate) const FORWARD_BUSY: u64 = 1;

/// Heap address of an object header. Address 0 is null.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct ManagedRef(pub(crate) u64);

impl ManagedRef {
    pub const NULL: ManagedRef = ManagedRef(0);

    pub fn from_addr(addr: u64) -> Self {
        debug_assert_eq!(addr % OBJECT_ALIGN, 0);
        ManagedRef(addr)
    }

    #[inline]
    pub fn addr(self) -> u64 {
        self.0
    }

    #[inline]
    pub fn is_null(self) -> bool {
        self.0 == 0
    }
}

impl fmt::Debug for ManagedRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_null() {
            write!(f, "null")
        } else {
            write!(f, "@{:#x}", self.0)
        }
    }
}

impl fmt::Display for ManagedRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ClassId(pub u32);

/// Identifies a bda-space; spaces are numbered in configuration order.
pub type SpaceId = u16;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassDescriptor {
    pub class_id: ClassId,
    pub name: String,
    pub ref_field_count: usize,
    pub scalar_bytes: usize,
    pub is_bda_class: bool,
    pub target_bda_space: Option<SpaceId>,
}

impl ClassDescriptor {
    /// Declared instance size: header, reference fields and scalar payload,
    /// rounded up to the object alignment.
    pub fn instance_size(&self) -> u64 {
        instance_size(self.ref_field_count, self.scalar_bytes)
    }
}

pub fn instance_size(ref_fields: usize, scalar_bytes: usize) -> u64 {
    align_up(
        HEADER_BYTES + ref_fields as u64 * FIELD_BYTES + scalar_bytes as u64,
        OBJECT_ALIGN,
    )
}

/// Per-class data the collectors need on every object visit.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct Shape {
    pub refs: u32,
    pub size: u64,
    pub bda_space: Option<SpaceId>,
}

#[derive(Debug)]
pub struct ClassRegistry {
    classes: Vec<ClassDescriptor>,
    shapes: Vec<Shape>,
    by_name: HashMap<String, ClassId>,
    configured: Vec<String>,
    frozen: bool,
}

impl ClassRegistry {
    /// `bda_classes` is the configured list of storage types; a registered
    /// class whose name appears at position `i` is served by bda-space `i`.
    pub fn new(bda_classes: &[String]) -> Self {
        let filler = ClassDescriptor {
            class_id: ClassId(FILLER_CLASS),
            name: "<filler>".to_string(),
            ref_field_count: 0,
            scalar_bytes: 0,
            is_bda_class: false,
            target_bda_space: None,
        };
        ClassRegistry {
            classes: vec![filler],
            shapes: vec![Shape::default()],
            by_name: HashMap::new(),
            configured: bda_classes.to_vec(),
            frozen: false,
        }
    }

    pub fn register(
        &mut self,
        name: &str,
        ref_field_count: usize,
        scalar_bytes: usize,
    ) -> Result<ClassDescriptor> {
        if self.frozen {
            return Err(GcError::RegistryFrozen);
        }
        if self.by_name.contains_key(name) {
            return Err(GcError::DuplicateClass(name.to_string()));
        }
        let class_id = ClassId(self.classes.len() as u32);
        let target_bda_space = self
            .configured
            .iter()
            .position(|c| c == name)
            .map(|i| i as SpaceId);
        let desc = ClassDescriptor {
            class_id,
            name: name.to_string(),
            ref_field_count,
            scalar_bytes,
            is_bda_class: target_bda_space.is_some(),
            target_bda_space,
        };
        self.shapes.push(Shape {
            refs: ref_field_count as u32,
            size: desc.instance_size(),
            bda_space: target_bda_space,
        });
        self.by_name.insert(name.to_string(), class_id);
        self.classes.push(desc.clone());
        Ok(desc)
    }

    pub fn get(&self, id: ClassId) -> Result<&ClassDescriptor> {
        match self.classes.get(id.0 as usize) {
            Some(d) if id.0 != FILLER_CLASS => Ok(d),
            _ => Err(GcError::UnknownClass(id.0)),
        }
    }

    pub fn by_name(&self, name: &str) -> Option<&ClassDescriptor> {
        self.by_name
            .get(name)
            .map(|id| &self.classes[id.0 as usize])
    }

    pub fn iter(&self) -> impl Iterator<Item = &ClassDescriptor> {
        self.classes.iter().skip(1)
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub(crate) fn shapes(&self) -> &[Shape] {
        &self.shapes
    }
}

/// A bda-class instance recorded at allocation, awaiting gang promotion.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ReferenceQueueEntry {
    pub root: ManagedRef,
    pub target_space: SpaceId,
}

/// Queue storage: `target_space << 48 | address`. Halves the mutator's
/// write traffic compared with the unpacked entry.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct PackedEntry(u64);

impl PackedEntry {
    const ADDR_BITS: u32 = 48;

    pub(crate) fn new(addr: u64, space: SpaceId) -> Self {
        debug_assert!(addr >> Self::ADDR_BITS == 0);
        PackedEntry(addr | (space as u64) << Self::ADDR_BITS)
    }

    pub(crate) fn addr(self) -> u64 {
        self.0 & ((1 << Self::ADDR_BITS) - 1)
    }

    pub(crate) fn unpack(self) -> ReferenceQueueEntry {
        ReferenceQueueEntry {
            root: ManagedRef(self.addr()),
            target_space: (self.0 >> Self::ADDR_BITS) as SpaceId,
        }
    }
}

/// Decoded view of header word 0.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ObjectHeader {
    pub class_id: ClassId,
    pub age: u8,
    pub mark: bool,
    pub forwarding: Option<ManagedRef>,
}

impl ObjectHeader {
    pub(crate) fn decode(word0: u64, word1: u64) -> Self {
        ObjectHeader {
            class_id: ClassId(word0 as u32),
            age: header_age(word0),
            mark: word0 & MARK_BIT != 0,
            forwarding: (word1 > FORWARD_BUSY).then_some(ManagedRef(word1)),
        }
    }
}

#[inline]
pub(crate) fn header_word(class: u32, age: u8) -> u64 {
    class as u64 | ((age as u64) << AGE_SHIFT)
}

#[inline]
pub(crate) fn header_class(word0: u64) -> u32 {
    word0 as u32
}

/// Mark test for heap walks. Fillers keep their size in the upper header
/// bits, so they never count as marked.
#[inline]
pub(crate) fn is_marked(word0: u64) -> bool {
    word0 & MARK_BIT != 0 && header_class(word0) != FILLER_CLASS
}

#[inline]
pub(crate) fn header_age(word0: u64) -> u8 {
    ((word0 & AGE_MASK) >> AGE_SHIFT) as u8
}

#[inline]
pub(crate) fn with_age(word0: u64, age: u8) -> u64 {
    (word0 & !AGE_MASK) | ((age as u64) << AGE_SHIFT)
}

#[inline]
pub(crate) fn filler_word(bytes: u64) -> u64 {
    debug_assert!(bytes >= WORD && bytes.is_multiple_of(WORD));
    FILLER_CLASS as u64 | (bytes << 32)
}

/// Size in bytes of the object whose header word 0 is `word0`.
#[inline]
pub(crate) fn object_size(shapes: &[Shape], word0: u64) -> u64 {
    let class = header_class(word0);
    if class == FILLER_CLASS {
        word0 >> 32
    } else {
        shapes[class as usize].size
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn registry(list: &[&str]) -> ClassRegistry {
        ClassRegistry::new(&list.iter().map(|s| s.to_string()).collect::<Vec<_>>())
    }

    #[test]
    fn configured_class_is_bda() {
        let mut r = registry(&["KVMap"]);
        let d = r.register("KVMap", 4, 0).unwrap();
        assert!(d.is_bda_class);
        assert_eq!(d.target_bda_space, Some(0));
    }

    #[test]
    fn unlisted_class_is_not_bda() {
        let mut r = registry(&[]);
        let d = r.register("String", 0, 16).unwrap();
        assert!(!d.is_bda_class);
        assert_eq!(d.target_bda_space, None);
    }

    #[test]
    fn duplicate_name_rejected() {
        let mut r = registry(&[]);
        r.register("A", 1, 0).unwrap();
        assert_eq!(
            r.register("A", 2, 0),
            Err(GcError::DuplicateClass("A".into()))
        );
    }

    #[test]
    fn frozen_registry_rejects() {
        let mut r = registry(&[]);
        r.freeze();
        assert_eq!(r.register("A", 0, 0), Err(GcError::RegistryFrozen));
    }

    #[test]
    fn size_formula() {
        assert_eq!(instance_size(2, 0), 32);
        assert_eq!(instance_size(0, 0), 16);
        assert_eq!(instance_size(1, 3), 32);
        assert_eq!(instance_size(0, 8), 24);
    }

    #[test]
    fn header_round_trip() {
        let w = header_word(7, 3) | MARK_BIT;
        let h = ObjectHeader::decode(w, 0x1000);
        assert_eq!(h.class_id, ClassId(7));
        assert_eq!(h.age, 3);
        assert!(h.mark);
        assert_eq!(h.forwarding, Some(ManagedRef(0x1000)));
        assert_eq!(header_age(with_age(w, 9)), 9);
        let shapes = [Shape::default()];
        assert_eq!(object_size(&shapes, filler_word(40)), 40);
    }

    #[test]
    fn packed_entry_round_trips() {
        for (addr, space) in [(0u64, 0u16), (4096, 1), ((1 << 48) - 8, u16::MAX)] {
            let e = PackedEntry::new(addr, space);
            assert_eq!(e.addr(), addr);
            assert_eq!(
                e.unpack(),
                ReferenceQueueEntry {
                    root: ManagedRef(addr),
                    target_space: space
                }
            );
        }
    }
}
