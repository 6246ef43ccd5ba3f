#![allow(dead_code)]

use std::collections::{HashMap, VecDeque};

use bdaheap::{BdaConfig, ClassId, Heap, HeapConfig, ManagedRef, Mode};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Classes {
    pub map: ClassId,
    pub node: ClassId,
    pub leaf: ClassId,
    pub obj: ClassId,
}

pub const MAP_FIELDS: usize = 4;

pub fn config(heap_bytes: u64, mode: Mode, gc_threads: usize) -> HeapConfig {
    HeapConfig {
        heap_bytes,
        young_fraction: 0.25,
        mode,
        gc_threads,
        verify: true,
        bda: BdaConfig {
            classes: vec!["Map".into()],
            container_size: 8,
            ..BdaConfig::default()
        },
        ..HeapConfig::default()
    }
}

pub fn heap_with(cfg: HeapConfig) -> (Heap, Classes) {
    let mut heap = Heap::new(cfg).expect("heap");
    let classes = Classes {
        map: heap.register_class("Map", MAP_FIELDS, 8).unwrap().class_id,
        node: heap.register_class("Node", 2, 8).unwrap().class_id,
        leaf: heap.register_class("Leaf", 0, 16).unwrap().class_id,
        obj: heap.register_class("Obj", 3, 8).unwrap().class_id,
    };
    (heap, classes)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// One object of the canonical graph: class, scalar payload and edges as
/// indices into the canonical order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CanonNode {
    pub class: u32,
    pub scalar: Vec<u8>,
    pub edges: Vec<Option<usize>>,
}

/// Reachable graph numbered in breadth-first order from the roots, so two
/// heaps compare equal iff their reachable graphs are isomorphic with the
/// same root order.
pub fn canonical(heap: &Heap) -> Vec<CanonNode> {
    let mut index: HashMap<ManagedRef, usize> = HashMap::new();
    let mut order = Vec::new();
    let mut q = VecDeque::new();
    for r in heap.root_refs() {
        if let std::collections::hash_map::Entry::Vacant(e) = index.entry(r) {
            e.insert(order.len());
            order.push(r);
            q.push_back(r);
        }
    }
    while let Some(o) = q.pop_front() {
        for i in 0..heap.field_count(o).unwrap() {
            let v = heap.read_field(o, i).unwrap();
            if !v.is_null() && !index.contains_key(&v) {
                index.insert(v, order.len());
                order.push(v);
                q.push_back(v);
            }
        }
    }
    // root identity matters too
    let mut out: Vec<CanonNode> = order
        .iter()
        .map(|&o| {
            let class = heap.class_of(o).unwrap();
            let scalar_len = heap.classes().get(class).unwrap().scalar_bytes;
            CanonNode {
                class: class.0,
                scalar: heap.read_scalar(o, 0, scalar_len).unwrap(),
                edges: (0..heap.field_count(o).unwrap())
                    .map(|i| {
                        let v = heap.read_field(o, i).unwrap();
                        (!v.is_null()).then(|| index[&v])
                    })
                    .collect(),
            }
        })
        .collect();
    let roots: Vec<Option<usize>> = heap.root_refs().iter().map(|r| Some(index[r])).collect();
    out.push(CanonNode {
        class: u32::MAX,
        scalar: Vec::new(),
        edges: roots,
    });
    out
}

/// Live bytes by the BFS oracle.
pub fn live_bytes(heap: &Heap) -> u64 {
    heap.reachable()
        .iter()
        .map(|a| heap.size_of(ManagedRef::from_addr(*a)).unwrap())
        .sum()
}

/// Builds a map with `entries` (node -> leaf, leaf) children.
pub fn build_map(heap: &mut Heap, c: &Classes, entries: usize, tag: u64) -> ManagedRef {
    let m = heap.allocate(c.map, &[], &tag.to_le_bytes()).unwrap();
    heap.push_temp(m);
    for i in 0..entries.min(MAP_FIELDS) {
        let k = heap
            .allocate(c.leaf, &[], &(tag * 100 + i as u64).to_le_bytes())
            .unwrap();
        heap.push_temp(k);
        let v = heap.allocate(c.leaf, &[], &[i as u8; 16]).unwrap();
        let k = heap.pop_temp();
        let n = heap.allocate(c.node, &[k, v], &[]).unwrap();
        heap.write_field(heap.temp(0), i, n).unwrap();
    }
    heap.pop_temp()
}

/// A random heap: bda maps with private subtrees plus a random graph of
/// plain objects, some of which reference maps. Returns the root handles.
pub fn random_heap(
    heap: &mut Heap,
    c: &Classes,
    r: &mut ChaCha8Rng,
    objects: usize,
) -> Vec<bdaheap::RootHandle> {
    let mut handles = Vec::new();
    let mut all: Vec<bdaheap::RootHandle> = Vec::new();
    let mut made = 0;
    while made < objects {
        if r.gen_bool(0.2) {
            let m = build_map(heap, c, r.gen_range(0..=MAP_FIELDS), made as u64);
            made += 1 + 3 * MAP_FIELDS;
            all.push(heap.add_root(m));
        } else {
            let refs: Vec<ManagedRef> = (0..r.gen_range(0..=3))
                .map(|_| match all.choose(r) {
                    Some(h) if r.gen_bool(0.7) => heap.root(*h),
                    _ => ManagedRef::NULL,
                })
                .collect();
            let o = heap
                .allocate(c.obj, &refs, &(made as u64).to_le_bytes())
                .unwrap();
            made += 1;
            all.push(heap.add_root(o));
        }
    }
    // Keep a random subset rooted; the rest is garbage unless referenced.
    for h in all {
        if r.gen_bool(0.3) {
            handles.push(h);
        } else {
            heap.remove_root(h);
        }
    }
    handles
}

/// Random reference stores into rooted plain objects; values are fresh
/// objects, null, or other roots. Bda subtrees are never rewired.
pub fn mutate(
    heap: &mut Heap,
    c: &Classes,
    r: &mut ChaCha8Rng,
    handles: &[bdaheap::RootHandle],
    n: usize,
) {
    if handles.is_empty() {
        return;
    }
    for _ in 0..n {
        let h = *handles.choose(r).unwrap();
        if heap.class_of(heap.root(h)).unwrap() != c.obj {
            continue;
        }
        let value = if r.gen_bool(0.3) {
            heap.allocate(c.obj, &[], &[7; 8]).unwrap()
        } else if r.gen_bool(0.2) {
            ManagedRef::NULL
        } else {
            heap.root(*handles.choose(r).unwrap())
        };
        // allocation may have collected: read the holder afterwards
        let src = heap.root(h);
        heap.write_field(src, r.gen_range(0..3), value).unwrap();
    }
}
