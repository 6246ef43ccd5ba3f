use thiserror::Error;

use crate::object::ManagedRef;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GcError {
    #[error("class `{0}` is already registered")]
    DuplicateClass(String),
    #[error("class id {0} is not registered")]
    UnknownClass(u32),
    #[error("class registry is frozen after the first allocation")]
    RegistryFrozen,
    #[error("object of {size} bytes cannot fit in eden ({eden} bytes)")]
    ObjectTooLarge { size: u64, eden: u64 },
    #[error("heap exhausted: {0}")]
    OutOfMemory(&'static str),
    #[error("field index {index} out of range for object {obj} with {count} fields")]
    FieldIndex {
        obj: ManagedRef,
        index: usize,
        count: usize,
    },
    #[error("scalar range {offset}+{len} out of range for {obj} with {size} scalar bytes")]
    ScalarRange {
        obj: ManagedRef,
        offset: usize,
        len: usize,
        size: usize,
    },
    #[error("null reference dereferenced")]
    NullRef,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("segment {0} is not owned")]
    SegmentNotOwned(u32),
    #[error("container {0} does not belong to bda-space {1}")]
    ForeignContainer(u32, u16),
}

pub type Result<T, E = GcError> = std::result::Result<T, E>;
