mod common;

use std::collections::HashSet;

use bdaheap::{BdaConfig, GcKind, HeapConfig, Location, Mode};
use common::*;

/// Allocates live leaves, tenures them, and returns their handles.
fn tenured_leaves(heap: &mut bdaheap::Heap, c: &Classes, n: u64) -> Vec<bdaheap::RootHandle> {
    let hs: Vec<_> = (0..n)
        .map(|i| {
            let o = heap.allocate(c.leaf, &[], &i.to_le_bytes()).unwrap();
            heap.add_root(o)
        })
        .collect();
    heap.minor_collect().unwrap();
    heap.minor_collect().unwrap();
    hs
}

#[test]
fn zero_garbage_keeps_graph_and_order() {
    let (mut heap, c) = heap_with(config(1 << 20, Mode::Base, 2));
    let hs = tenured_leaves(&mut heap, &c, 300);
    let addrs: Vec<_> = hs.iter().map(|h| heap.root(*h)).collect();
    let top = heap.layout().nonbda_top;
    let live = live_bytes(&heap);
    let before = canonical(&heap);
    let s = heap.full_collect().unwrap();
    assert_eq!(s.kind, GcKind::Full);
    assert_eq!(canonical(&heap), before);
    // only buffer-tail fillers are reclaimed
    let l = heap.layout();
    assert!(l.nonbda_top <= top);
    assert_eq!(l.nonbda_top - l.geometry.old_nonbda.start, live);
    // sliding keeps relative order and never moves anything up
    let mut moved: Vec<_> = addrs.iter().zip(hs.iter().map(|h| heap.root(*h))).collect();
    moved.sort_by_key(|(b, _)| **b);
    assert!(moved.windows(2).all(|w| w[0].1 < w[1].1));
    assert!(moved.iter().all(|(b, a)| a <= *b));
    assert!(
        heap.verify_failures().is_empty(),
        "{:?}",
        heap.verify_failures()
    );
}

#[test]
fn all_dead_resets_every_top_and_pools_segments() {
    let (mut heap, c) = heap_with(config(1 << 20, Mode::Bda, 2));
    let mut hs = tenured_leaves(&mut heap, &c, 100);
    for k in 0..6 {
        let m = build_map(&mut heap, &c, 4, k);
        hs.push(heap.add_root(m));
    }
    heap.minor_collect().unwrap();
    assert!(heap.layout().containers().count() > 0);
    for h in hs {
        heap.remove_root(h);
    }
    let s = heap.full_collect().unwrap();
    assert_eq!(s.live_bytes, 0);
    let l = heap.layout();
    assert_eq!(l.nonbda_top, l.geometry.old_nonbda.start);
    assert_eq!(l.containers().count(), 0);
    assert_eq!(l.owned_segments().count(), 0);
    for sp in &l.spaces {
        assert_eq!(sp.top, sp.range.start);
        assert_eq!(
            sp.pool.len() as u64,
            (sp.carved - sp.range.start) / l.segment_size()
        );
    }
    assert!(
        heap.verify_failures().is_empty(),
        "{:?}",
        heap.verify_failures()
    );
}

#[test]
fn half_garbage_preserves_graph_and_live_bytes() {
    for seed in 0..12 {
        let (mut heap, c) = heap_with(config(2 << 20, Mode::Bda, 1 + seed as usize % 4));
        let mut r = rng(seed);
        let handles = random_heap(&mut heap, &c, &mut r, 1500);
        heap.minor_collect().unwrap();
        mutate(&mut heap, &c, &mut r, &handles, 300);
        heap.minor_collect().unwrap();
        heap.minor_collect().unwrap();
        // drop half of the remaining roots
        for h in handles.iter().step_by(2) {
            heap.remove_root(*h);
        }
        let before = canonical(&heap);
        let live = live_bytes(&heap);
        let s = heap.full_collect().unwrap();
        assert_eq!(s.live_bytes, live, "seed {seed}");
        assert_eq!(canonical(&heap), before, "seed {seed}");
        assert_eq!(live_bytes(&heap), live, "seed {seed}");
        assert!(
            heap.verify_failures().is_empty(),
            "seed {seed}: {:?}",
            heap.verify_failures()
        );
    }
}

#[test]
fn sliding_preserves_address_order() {
    let (mut heap, c) = heap_with(config(1 << 20, Mode::Base, 3));
    let hs = tenured_leaves(&mut heap, &c, 2000);
    let mut keep = Vec::new();
    for (i, h) in hs.into_iter().enumerate() {
        if i % 3 == 0 {
            keep.push(h);
        } else {
            heap.remove_root(h);
        }
    }
    let order = |heap: &bdaheap::Heap| {
        let mut v: Vec<(u64, u64)> = keep
            .iter()
            .map(|h| {
                (
                    heap.root(*h).addr(),
                    heap.read_u64(heap.root(*h), 0).unwrap(),
                )
            })
            .collect();
        v.sort();
        v.into_iter().map(|(_, tag)| tag).collect::<Vec<_>>()
    };
    let before = order(&heap);
    let top = heap.layout().nonbda_top;
    let s = heap.full_collect().unwrap();
    assert!(s.regions_moved > 0);
    assert!(heap.layout().nonbda_top < top);
    assert_eq!(order(&heap), before);
}

#[test]
fn marked_set_matches_reachability() {
    for seed in 0..8 {
        let (mut heap, c) = heap_with(config(2 << 20, Mode::Bda, 1 + seed as usize % 4));
        let mut r = rng(100 + seed);
        let handles = random_heap(&mut heap, &c, &mut r, 1200);
        heap.minor_collect().unwrap();
        mutate(&mut heap, &c, &mut r, &handles, 200);
        let marked: HashSet<u64> = heap.marked_set().into_iter().map(|m| m.addr()).collect();
        let reach = heap.reachable();
        let extra: Vec<_> = marked
            .difference(&reach)
            .map(|a| (a, heap.locate(bdaheap::ManagedRef::from_addr(*a))))
            .collect();
        let missing: Vec<_> = reach
            .difference(&marked)
            .map(|a| (a, heap.locate(bdaheap::ManagedRef::from_addr(*a))))
            .collect();
        assert!(
            extra.is_empty() && missing.is_empty(),
            "seed {seed}: extra {extra:?} missing {missing:?}"
        );
        // marks were cleared again
        assert!(heap.verify().is_empty(), "seed {seed}");
    }
}

#[test]
fn old_top_is_last_bda_space_top() {
    let (mut heap, c) = heap_with(config(1 << 20, Mode::Bda, 2));
    for k in 0..5 {
        let m = build_map(&mut heap, &c, 3, k);
        heap.add_root(m);
    }
    heap.minor_collect().unwrap();
    heap.full_collect().unwrap();
    let l = heap.layout();
    assert_eq!(l.old_top(), l.spaces.last().unwrap().top);
}

#[test]
fn young_survivors_move_into_old() {
    let (mut heap, c) = heap_with(config(1 << 20, Mode::Bda, 2));
    let o = heap.allocate(c.leaf, &[], &[9; 16]).unwrap();
    let h = heap.add_root(o);
    let m = build_map(&mut heap, &c, 2, 5);
    let hm = heap.add_root(m);
    let before = canonical(&heap);
    heap.full_collect().unwrap();
    assert_eq!(canonical(&heap), before);
    assert_eq!(heap.locate(heap.root(h)), Location::OldNonBda);
    assert_eq!(heap.locate(heap.root(hm)), Location::OldNonBda);
    assert_eq!(heap.young_used(), 0);
    assert_eq!(heap.queue_len(), 0);
    assert!(
        heap.verify_failures().is_empty(),
        "{:?}",
        heap.verify_failures()
    );
}

#[test]
fn freed_slot_takes_a_spilled_segment() {
    let cfg = HeapConfig {
        heap_bytes: 256 << 10,
        gc_threads: 2,
        tlab_bytes: 1024,
        verify: true,
        bda: BdaConfig {
            classes: vec!["Map".into()],
            bda_ratio: 0.03,
            container_size: 8,
            ..BdaConfig::default()
        },
        ..HeapConfig::default()
    };
    let (mut heap, c) = heap_with(cfg);
    let mut hs = Vec::new();
    for k in 0..6 {
        let m = build_map(&mut heap, &c, 4, k);
        hs.push(heap.add_root(m));
    }
    heap.minor_collect().unwrap();
    assert_eq!(heap.layout().spilled_segments().len(), 5);
    // the map holding the only slot dies
    let slot = heap.layout().spaces[0].slot(0).unwrap();
    let owner = heap.layout().segment(slot).owner.unwrap();
    let parent = heap.layout().container(owner).unwrap().parent;
    let dead = *hs.iter().find(|h| heap.root(**h) == parent).unwrap();
    heap.remove_root(dead);
    let before = canonical(&heap);
    let s = heap.full_collect().unwrap();
    assert!(s.segments_released >= 1);
    assert_eq!(heap.layout().spilled_segments().len(), 4);
    assert_eq!(heap.layout().containers().count(), 5);
    assert_eq!(canonical(&heap), before);
    assert!(
        heap.verify_failures().is_empty(),
        "{:?}",
        heap.verify_failures()
    );
}
