//! Card-table write barrier over the old generation, plus the object-start
//! table used to turn dirty card runs into object-aligned scan ranges.

use std::sync::atomic::{AtomicU64, AtomicU8, Ordering};

use crate::layout::AddrRange;

pub const CARD_BYTES: u64 = 512;
/// Granularity of the object-start table; equal to the card size.
pub const BLOCK_BYTES: u64 = CARD_BYTES;

const CLEAN: u8 = 0;
const DIRTY: u8 = 1;

pub struct CardTable {
    base: u64,
    cards: Box<[AtomicU8]>,
}

impl CardTable {
    pub fn new(covered: AddrRange) -> Self {
        let n = covered.len().div_ceil(CARD_BYTES) as usize;
        CardTable {
            base: covered.start,
            cards: (0..n).map(|_| AtomicU8::new(CLEAN)).collect(),
        }
    }

    #[inline]
    pub fn card_index(&self, addr: u64) -> usize {
        ((addr - self.base) / CARD_BYTES) as usize
    }

    pub fn card_start(&self, index: usize) -> u64 {
        self.base + index as u64 * CARD_BYTES
    }

    pub fn len(&self) -> usize {
        self.cards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cards.is_empty()
    }

    /// Write barrier: dirties the card covering `addr`. Lock-free; clean to
    /// dirty is the only transition mutators make.
    #[inline]
    pub fn dirty_on_store(&self, addr: u64) {
        let i = self.card_index(addr);
        if self.cards[i].load(Ordering::Relaxed) != DIRTY {
            self.cards[i].store(DIRTY, Ordering::Relaxed);
        }
    }

    pub fn is_dirty(&self, index: usize) -> bool {
        self.cards[index].load(Ordering::Relaxed) == DIRTY
    }

    pub fn is_dirty_addr(&self, addr: u64) -> bool {
        self.is_dirty(self.card_index(addr))
    }

    pub fn dirty_count(&self) -> usize {
        self.cards
            .iter()
            .filter(|c| c.load(Ordering::Relaxed) == DIRTY)
            .count()
    }

    pub fn clear_range(&self, range: AddrRange) {
        if range.is_empty() {
            return;
        }
        let first = self.card_index(range.start);
        let last = self.card_index(range.end - 1);
        for c in &self.cards[first..=last] {
            c.store(CLEAN, Ordering::Relaxed);
        }
    }

    /// End of a full collection: clean every card when the young generation
    /// is empty, otherwise dirty every card.
    pub fn clean_or_invalidate(&self, young_empty: bool) {
        let v = if young_empty { CLEAN } else { DIRTY };
        for c in self.cards.iter() {
            c.store(v, Ordering::Relaxed);
        }
    }

    /// Maximal runs of dirty cards intersected with `[bottom, top)`.
    pub fn dirty_runs(&self, bottom: u64, top: u64) -> Vec<AddrRange> {
        let mut runs = Vec::new();
        if top <= bottom {
            return runs;
        }
        let first = self.card_index(bottom);
        let last = self.card_index(top - 1);
        let mut i = first;
        while i <= last {
            if !self.is_dirty(i) {
                i += 1;
                continue;
            }
            let start = i;
            while i <= last && self.is_dirty(i) {
                i += 1;
            }
            runs.push(AddrRange::new(
                self.card_start(start).max(bottom),
                self.card_start(i).min(top),
            ));
        }
        runs
    }
}

/// For each 512-byte block, the start of the object covering the block's
/// first byte. Maintained whenever an object or filler is placed in the old
/// generation.
pub struct BlockStartTable {
    base: u64,
    starts: Box<[AtomicU64]>,
}

impl BlockStartTable {
    pub fn new(covered: AddrRange) -> Self {
        let n = covered.len().div_ceil(BLOCK_BYTES) as usize;
        BlockStartTable {
            base: covered.start,
            starts: (0..n).map(|_| AtomicU64::new(0)).collect(),
        }
    }

    /// Records an object occupying `[start, start + size)`.
    #[inline]
    pub fn record(&self, start: u64, size: u64) {
        let first = (start - self.base).div_ceil(BLOCK_BYTES);
        let last = (start + size - 1 - self.base) / BLOCK_BYTES;
        for b in first..=last {
            self.starts[b as usize].store(start, Ordering::Relaxed);
        }
    }

    /// Start of the object covering the first byte of the block containing
    /// `addr`; only meaningful below the owning space's top.
    #[inline]
    pub fn block_object(&self, addr: u64) -> u64 {
        self.starts[((addr - self.base) / BLOCK_BYTES) as usize].load(Ordering::Relaxed)
    }

    /// Walks forward from the block entry to the object that covers `addr`.
    pub fn object_covering(&self, addr: u64, size_of: impl Fn(u64) -> u64) -> u64 {
        let mut obj = self.block_object(addr);
        debug_assert!(obj != 0 && obj <= addr, "no block entry for {addr:#x}");
        loop {
            let end = obj + size_of(obj);
            if end > addr {
                return obj;
            }
            obj = end;
        }
    }
}

/// Dirty card runs of one space adjusted to object boundaries: each range
/// starts at the first object overlapping the run and ends at the end of the
/// last one, clamped to `[bottom, top)`. Ranges never leave the space.
pub fn scan_dirty_ranges(
    cards: &CardTable,
    starts: &BlockStartTable,
    bottom: u64,
    top: u64,
    size_of: impl Fn(u64) -> u64,
) -> Vec<AddrRange> {
    cards
        .dirty_runs(bottom, top)
        .into_iter()
        .map(|run| {
            let first = starts.object_covering(run.start, &size_of).max(bottom);
            let mut end = first;
            while end < run.end {
                end += size_of(end);
            }
            AddrRange::new(first, end.min(top))
        })
        .collect()
}
