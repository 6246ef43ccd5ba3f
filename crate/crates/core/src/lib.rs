//! Generational garbage-collected heap with container-aware placement of
//! configured storage types ("bda-classes"), plus a locality analyzer.
//!
//! Instances of a bda-class are queued at allocation. At the next minor
//! collection each queued root and its young children are copied together
//! ("gang promotion") into a container of segments in the old generation,
//! so that objects of one storage instance share pages. The full collector
//! compacts each space and never mixes segments of different containers.

pub mod analyzer;
pub mod barrier;
pub mod error;
pub mod full;
pub mod heap;
pub mod layout;
pub mod memory;
pub mod object;
pub mod stats;
mod verify;
mod workers;
mod young;

pub use barrier::{scan_dirty_ranges, BlockStartTable, CardTable, CARD_BYTES};
pub use error::{GcError, Result};
pub use heap::{Heap, HeapConfig, Mode, RootHandle, TLAB_BYTES};
pub use layout::{
    estimate_container_bytes, segment_size, AddrRange, BdaConfig, Container, ContainerId,
    HeapGeometry, Location, OldLayout, Segment, SegmentId, REGION_BYTES,
};
pub use object::{
    instance_size, ClassDescriptor, ClassId, ClassRegistry, ManagedRef, ObjectHeader,
    ReferenceQueueEntry, SpaceId, FIELD_BYTES, HEADER_BYTES, OBJECT_ALIGN,
};
pub use stats::{GcKind, GcStats, HeapTotals};
