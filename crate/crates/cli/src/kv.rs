//! Key-value store built from managed objects:
//! table name -> (row key -> sorted (field key -> data)).
//!
//! A table is an open-addressing hash map: a directory of slot chunks whose
//! slots hold `Entry(key, value)` objects. A row is a `SortedMap` whose
//! reference fields point to `Node(key, data)` objects in key order, so the
//! map reaches its data at delegation level 2.

use bdaheap::analyzer::PageCache;
use bdaheap::{ClassId, GcError, Heap, ManagedRef, Result, RootHandle};

pub const SLOTS_PER_CHUNK: usize = 256;
/// Directory slots times chunk slots.
pub const MAX_TABLE_SLOTS: usize = SLOTS_PER_CHUNK * SLOTS_PER_CHUNK;
pub const ROW_CLASS: &str = "SortedMap";

#[derive(Clone, Copy, Debug)]
pub struct KvClasses {
    pub slots: ClassId,
    pub entry: ClassId,
    pub key: ClassId,
    pub row: ClassId,
    pub node: ClassId,
    pub data: ClassId,
}

#[derive(Clone, Copy, Debug)]
pub struct Table {
    pub root: RootHandle,
    pub capacity: usize,
}

/// Heap plus the benchmark's classes. When `cache` is set, every managed
/// read and write is fed to the page-cache model.
pub struct Kv {
    pub heap: Heap,
    pub classes: KvClasses,
    pub cache: Option<PageCache>,
    pub fields_per_row: usize,
    pub value_bytes: usize,
}

pub fn hash(key: u64) -> u64 {
    let mut h = key.wrapping_add(0x9e37_79b9_7f4a_7c15);
    h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}

fn field_addr(obj: ManagedRef, i: usize) -> u64 {
    obj.addr() + 16 + 8 * i as u64
}

impl Kv {
    pub fn new(mut heap: Heap, fields_per_row: usize, value_bytes: usize) -> Result<Self> {
        let classes = KvClasses {
            slots: heap.register_class("Slots", SLOTS_PER_CHUNK, 0)?.class_id,
            entry: heap.register_class("Entry", 2, 0)?.class_id,
            key: heap.register_class("Key", 0, 8)?.class_id,
            row: heap.register_class(ROW_CLASS, fields_per_row, 8)?.class_id,
            node: heap.register_class("Node", 2, 0)?.class_id,
            data: heap.register_class("Data", 0, value_bytes.max(8))?.class_id,
        };
        Ok(Kv {
            heap,
            classes,
            cache: None,
            fields_per_row,
            value_bytes: value_bytes.max(8),
        })
    }

    fn touch(&mut self, addr: u64) {
        if let Some(c) = &mut self.cache {
            c.access(addr);
        }
    }

    pub fn read(&mut self, obj: ManagedRef, i: usize) -> ManagedRef {
        self.touch(field_addr(obj, i));
        self.heap.read_field(obj, i).expect("field in range")
    }

    pub fn write(&mut self, obj: ManagedRef, i: usize, v: ManagedRef) {
        self.touch(field_addr(obj, i));
        self.heap.write_field(obj, i, v).expect("field in range");
    }

    /// First scalar word of an object with `refs` reference fields.
    pub fn word(&mut self, obj: ManagedRef, refs: usize) -> u64 {
        self.touch(field_addr(obj, refs));
        self.heap.read_u64(obj, 0).expect("scalar word")
    }

    pub fn create_table(&mut self, rows: usize) -> Result<Table> {
        let capacity = (2 * rows).next_power_of_two().max(SLOTS_PER_CHUNK);
        if capacity > MAX_TABLE_SLOTS {
            return Err(GcError::InvalidConfig(format!(
                "{rows} rows exceed one table's capacity"
            )));
        }
        let dir = self.heap.allocate(self.classes.slots, &[], &[])?;
        let root = self.heap.add_root(dir);
        for c in 0..capacity / SLOTS_PER_CHUNK {
            let chunk = self.heap.allocate(self.classes.slots, &[], &[])?;
            self.heap.write_field(self.heap.root(root), c, chunk)?;
        }
        Ok(Table { root, capacity })
    }

    fn slot(&mut self, t: Table, index: usize) -> (ManagedRef, usize) {
        let dir = self.heap.root(t.root);
        let chunk = self.read(dir, index / SLOTS_PER_CHUNK);
        (chunk, index % SLOTS_PER_CHUNK)
    }

    fn entry_key(&mut self, entry: ManagedRef) -> u64 {
        let k = self.read(entry, 0);
        self.word(k, 0)
    }

    /// Slot index holding `key`, or the free slot where it would go.
    fn probe(&mut self, t: Table, key: u64) -> (usize, Option<ManagedRef>) {
        let mask = t.capacity - 1;
        let mut i = hash(key) as usize & mask;
        loop {
            let (chunk, s) = self.slot(t, i);
            let e = self.read(chunk, s);
            if e.is_null() || self.entry_key(e) == key {
                return (i, (!e.is_null()).then_some(e));
            }
            i = (i + 1) & mask;
        }
    }

    /// Value stored under `key`.
    pub fn get(&mut self, t: Table, key: u64) -> Option<ManagedRef> {
        let (_, e) = self.probe(t, key);
        e.map(|e| self.read(e, 1))
    }

    /// Inserts or replaces `key`; the value is taken from the top of the
    /// temp stack and popped.
    pub fn insert_from_temp(&mut self, t: Table, key: u64) -> Result<()> {
        let (i, existing) = self.probe(t, key);
        if let Some(e) = existing {
            let v = self.heap.pop_temp();
            self.write(e, 1, v);
            return Ok(());
        }
        let k = self
            .heap
            .allocate(self.classes.key, &[], &key.to_le_bytes())?;
        let v = self.heap.pop_temp();
        let e = self.heap.allocate(self.classes.entry, &[k, v], &[])?;
        let (chunk, s) = self.slot(t, i);
        self.write(chunk, s, e);
        Ok(())
    }

    /// `(key, value)` in slot `index`, if occupied.
    pub fn entry_at(&mut self, t: Table, index: usize) -> Option<(u64, ManagedRef)> {
        let (chunk, s) = self.slot(t, index);
        let e = self.read(chunk, s);
        if e.is_null() {
            return None;
        }
        let key = self.entry_key(e);
        Some((key, self.read(e, 1)))
    }

    /// Builds a row from fields sorted by key and leaves it on the temp
    /// stack. Allocation order is row, then key, data and node per field.
    pub fn build_row(&mut self, fields: &[(u64, &[u8])]) -> Result<()> {
        debug_assert!(fields.len() <= self.fields_per_row);
        debug_assert!(fields.windows(2).all(|w| w[0].0 < w[1].0));
        let row =
            self.heap
                .allocate(self.classes.row, &[], &(fields.len() as u64).to_le_bytes())?;
        self.heap.push_temp(row);
        for (i, (fk, value)) in fields.iter().enumerate() {
            let k = self
                .heap
                .allocate(self.classes.key, &[], &fk.to_le_bytes())?;
            self.heap.push_temp(k);
            let d = self.heap.allocate(self.classes.data, &[], value)?;
            let k = self.heap.pop_temp();
            let n = self.heap.allocate(self.classes.node, &[k, d], &[])?;
            let row = self.heap.temp(0);
            self.write(row, i, n);
        }
        Ok(())
    }

    pub fn row_len(&mut self, row: ManagedRef) -> usize {
        self.word(row, self.fields_per_row) as usize
    }

    /// Node `i` of a row as (field key, data).
    pub fn row_field(&mut self, row: ManagedRef, i: usize) -> (u64, ManagedRef) {
        let n = self.read(row, i);
        let k = self.read(n, 0);
        let key = self.word(k, 0);
        (key, self.read(n, 1))
    }

    /// Binary search of a row for `field`; returns the data object.
    pub fn row_get(&mut self, row: ManagedRef, field: u64) -> Option<ManagedRef> {
        let (mut lo, mut hi) = (0, self.row_len(row));
        while lo < hi {
            let mid = (lo + hi) / 2;
            let n = self.read(row, mid);
            let k = self.read(n, 0);
            match self.word(k, 0).cmp(&field) {
                std::cmp::Ordering::Equal => return Some(self.read(n, 1)),
                std::cmp::Ordering::Less => lo = mid + 1,
                std::cmp::Ordering::Greater => hi = mid,
            }
        }
        None
    }

    /// Numeric value stored in the first word of a data object.
    pub fn data_value(&mut self, data: ManagedRef) -> u64 {
        self.word(data, 0)
    }

    /// Every row reachable from `tables`, in table then slot order.
    pub fn rows(&mut self, tables: &[Table]) -> Vec<ManagedRef> {
        let mut out = Vec::new();
        for t in tables {
            for i in 0..t.capacity {
                if let Some((_, v)) = self.entry_at(*t, i) {
                    out.push(v);
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use bdaheap::{HeapConfig, Mode};

    fn kv(mode: Mode) -> Kv {
        let mut cfg = HeapConfig {
            heap_bytes: 4 << 20,
            mode,
            gc_threads: 1,
            verify: true,
            ..HeapConfig::default()
        };
        cfg.bda.classes = vec![ROW_CLASS.into()];
        cfg.bda.container_size = 8;
        Kv::new(Heap::new(cfg).unwrap(), 4, 16).unwrap()
    }

    #[test]
    fn rows_survive_collections_and_lookups_work() {
        for mode in [Mode::Base, Mode::Bda] {
            let mut kv = kv(mode);
            let t = kv.create_table(300).unwrap();
            for r in 0..300u64 {
                let v1 = (r * 10).to_le_bytes();
                let v2 = (r * 10 + 1).to_le_bytes();
                kv.build_row(&[(3, &v1), (9, &v2)]).unwrap();
                kv.insert_from_temp(t, r).unwrap();
            }
            kv.heap.minor_collect().unwrap();
            kv.heap.full_collect().unwrap();
            for r in 0..300u64 {
                let row = kv.get(t, r).unwrap();
                assert_eq!(kv.row_len(row), 2);
                let d = kv.row_get(row, 9).unwrap();
                assert_eq!(kv.data_value(d), r * 10 + 1);
                assert!(kv.row_get(row, 4).is_none());
            }
            assert!(kv.get(t, 999).is_none());
            assert_eq!(kv.rows(&[t]).len(), 300);
            assert!(kv.heap.verify_failures().is_empty());
        }
    }

    #[test]
    fn tracing_counts_accesses() {
        let mut kv = kv(Mode::Base);
        let t = kv.create_table(1).unwrap();
        kv.build_row(&[(1, &[7; 8])]).unwrap();
        kv.insert_from_temp(t, 5).unwrap();
        kv.cache = Some(PageCache::new(0));
        let row = kv.get(t, 5).unwrap();
        kv.row_get(row, 1).unwrap();
        assert!(kv.cache.as_ref().unwrap().accesses() >= 6);
    }
}
