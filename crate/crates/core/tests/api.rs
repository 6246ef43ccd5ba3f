mod common;

use bdaheap::{ClassId, GcError, Heap, ManagedRef, Mode, CARD_BYTES};
use common::*;

/// Card index of a field slot, from the documented object layout: two
/// header words, then the reference fields.
fn slot_card(heap: &Heap, obj: ManagedRef, field: usize) -> usize {
    let covered = heap.geometry().old_range();
    ((obj.addr() + 16 + 8 * field as u64 - covered.start) / CARD_BYTES) as usize
}

fn tenured_obj(heap: &mut Heap, c: &Classes) -> bdaheap::RootHandle {
    let o = heap.allocate(c.obj, &[], &[]).unwrap();
    let h = heap.add_root(o);
    heap.minor_collect().unwrap();
    heap.minor_collect().unwrap();
    assert!(heap.is_old(heap.root(h).addr()));
    h
}

#[test]
fn old_to_young_store_dirties_exactly_one_card() {
    let (mut heap, c) = heap_with(config(1 << 20, Mode::Base, 1));
    let h = tenured_obj(&mut heap, &c);
    let y = heap.allocate(c.leaf, &[], &[]).unwrap();
    assert_eq!(heap.cards().dirty_count(), 0);
    let holder = heap.root(h);
    heap.write_field(holder, 1, y).unwrap();
    assert_eq!(heap.cards().dirty_count(), 1);
    assert!(heap.cards().is_dirty(slot_card(&heap, holder, 1)));
}

#[test]
fn young_and_old_targets_leave_cards_clean() {
    let (mut heap, c) = heap_with(config(1 << 20, Mode::Base, 1));
    let h = tenured_obj(&mut heap, &c);
    let h2 = tenured_obj(&mut heap, &c);
    let a = heap.allocate(c.obj, &[], &[]).unwrap();
    let b = heap.allocate(c.leaf, &[], &[]).unwrap();
    heap.write_field(a, 0, b).unwrap();
    heap.write_field(heap.root(h), 0, heap.root(h2)).unwrap();
    heap.write_field(heap.root(h), 1, ManagedRef::NULL).unwrap();
    assert_eq!(heap.cards().dirty_count(), 0);
}

#[test]
fn minor_collection_cleans_cards_it_consumed() {
    let (mut heap, c) = heap_with(config(1 << 20, Mode::Base, 2));
    let h = tenured_obj(&mut heap, &c);
    let y = heap.allocate(c.leaf, &[], &[5; 16]).unwrap();
    heap.write_field(heap.root(h), 2, y).unwrap();
    heap.minor_collect().unwrap();
    // the leaf is still young (age 1) so its card stays dirty
    let leaf = heap.read_field(heap.root(h), 2).unwrap();
    assert!(heap.is_young(leaf.addr()));
    assert_eq!(heap.cards().dirty_count(), 1);
    heap.minor_collect().unwrap();
    let leaf = heap.read_field(heap.root(h), 2).unwrap();
    assert!(heap.is_old(leaf.addr()));
    assert_eq!(heap.cards().dirty_count(), 0);
    assert_eq!(heap.read_scalar(leaf, 0, 16).unwrap(), vec![5; 16]);
}

#[test]
fn random_stores_keep_every_old_to_young_slot_on_a_dirty_card() {
    for seed in 0..10 {
        let (mut heap, c) = heap_with(config(2 << 20, Mode::Bda, 2));
        let mut r = rng(seed + 40);
        let handles = random_heap(&mut heap, &c, &mut r, 1000);
        for _ in 0..4 {
            heap.minor_collect().unwrap();
            mutate(&mut heap, &c, &mut r, &handles, 300);
            for h in &handles {
                let o = heap.root(*h);
                if !heap.is_old(o.addr()) {
                    continue;
                }
                for f in 0..heap.field_count(o).unwrap() {
                    let v = heap.read_field(o, f).unwrap();
                    if !v.is_null() && heap.is_young(v.addr()) {
                        assert!(
                            heap.cards().is_dirty(slot_card(&heap, o, f)),
                            "seed {seed}: {o} field {f}"
                        );
                    }
                }
            }
            assert!(heap.check_cards().is_empty(), "seed {seed}");
        }
    }
}

#[test]
fn allocation_and_access_errors() {
    let (mut heap, c) = heap_with(config(1 << 20, Mode::Base, 1));
    assert!(matches!(
        heap.allocate(ClassId(99), &[], &[]),
        Err(GcError::UnknownClass(99))
    ));
    let o = heap.allocate(c.node, &[], &[]).unwrap();
    assert!(matches!(
        heap.allocate(c.node, &[o, o, o], &[]),
        Err(GcError::FieldIndex { .. })
    ));
    assert!(matches!(
        heap.allocate(c.leaf, &[], &[0; 17]),
        Err(GcError::ScalarRange { .. })
    ));
    assert!(matches!(
        heap.read_field(o, 2),
        Err(GcError::FieldIndex {
            index: 2,
            count: 2,
            ..
        })
    ));
    assert!(matches!(
        heap.write_field(o, 5, o),
        Err(GcError::FieldIndex { .. })
    ));
    assert!(matches!(
        heap.read_field(ManagedRef::NULL, 0),
        Err(GcError::NullRef)
    ));
    assert!(matches!(
        heap.read_scalar(o, 4, 8),
        Err(GcError::ScalarRange { .. })
    ));
    assert!(matches!(
        heap.register_class("Late", 0, 0),
        Err(GcError::RegistryFrozen)
    ));
}

#[test]
fn object_larger_than_eden_is_rejected() {
    let mut heap = Heap::new(config(256 << 10, Mode::Base, 1)).unwrap();
    let big = heap.register_class("Big", 0, 200 << 10).unwrap().class_id;
    assert!(matches!(
        heap.allocate(big, &[], &[]),
        Err(GcError::ObjectTooLarge { .. })
    ));
}

#[test]
fn duplicate_class_is_rejected() {
    let (mut heap, _) = heap_with(config(1 << 20, Mode::Base, 1));
    assert_eq!(
        heap.register_class("Map", 1, 1).unwrap_err(),
        GcError::DuplicateClass("Map".into())
    );
}

#[test]
fn retaining_everything_ends_in_out_of_memory() {
    let (mut heap, c) = heap_with(config(256 << 10, Mode::Base, 1));
    let mut n = 0u64;
    let err = loop {
        match heap.allocate(c.leaf, &[], &n.to_le_bytes()) {
            Ok(o) => {
                heap.add_root(o);
                n += 1;
            }
            Err(e) => break e,
        }
        assert!(n < 100_000);
    };
    assert!(matches!(err, GcError::OutOfMemory(_)), "{err}");
    assert!(heap.totals().full_collections >= 1);
    // everything allocated so far is intact
    let tags: std::collections::HashSet<u64> = heap
        .root_refs()
        .iter()
        .map(|r| heap.read_u64(*r, 0).unwrap())
        .collect();
    assert_eq!(tags.len() as u64, n);
}
