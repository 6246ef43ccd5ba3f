//! Heap fixtures shared by the criterion benches.

use bdaheap::{BdaConfig, ClassId, Heap, HeapConfig, ManagedRef, Mode, Result};

pub struct Fixture {
    pub heap: Heap,
    pub map: ClassId,
    pub node: ClassId,
    pub leaf: ClassId,
}

/// A heap with a map class (bda in `Mode::Bda`), a two-field node class and
/// a 16-byte leaf class.
pub fn fixture(mode: Mode, heap_bytes: u64, gc_threads: usize) -> Result<Fixture> {
    let mut heap = Heap::new(HeapConfig {
        heap_bytes,
        mode,
        gc_threads,
        bda: BdaConfig {
            classes: vec!["Map".into()],
            container_size: 16,
            ..BdaConfig::default()
        },
        ..HeapConfig::default()
    })?;
    let map = heap.register_class("Map", 8, 0)?.class_id;
    let node = heap.register_class("Node", 2, 0)?.class_id;
    let leaf = heap.register_class("Leaf", 0, 16)?.class_id;
    Ok(Fixture {
        heap,
        map,
        node,
        leaf,
    })
}

impl Fixture {
    /// One map with eight (node, leaf, leaf) entries; returns the map.
    pub fn small_map(&mut self) -> Result<ManagedRef> {
        let m = self.heap.allocate(self.map, &[], &[])?;
        self.heap.push_temp(m);
        for i in 0..8 {
            let k = self
                .heap
                .allocate(self.leaf, &[], &(i as u64).to_le_bytes())?;
            self.heap.push_temp(k);
            let v = self.heap.allocate(self.leaf, &[], &[])?;
            let k = self.heap.pop_temp();
            let n = self.heap.allocate(self.node, &[k, v], &[])?;
            self.heap.write_field(self.heap.temp(0), i, n)?;
        }
        Ok(self.heap.pop_temp())
    }
}
