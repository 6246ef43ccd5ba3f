mod common;

use std::collections::{HashSet, VecDeque};
use std::io::BufReader;

use bdaheap::analyzer::*;
use bdaheap::Mode;
use common::*;
use proptest::prelude::*;
use rand::Rng;

/// Reference LRU: a recency list, most recent last.
fn naive_lru(trace: &[u64], capacity: usize) -> u64 {
    let mut pages: Vec<u64> = Vec::new();
    let mut faults = 0;
    for a in trace {
        let p = a / PAGE_BYTES;
        if let Some(i) = pages.iter().position(|x| *x == p) {
            pages.remove(i);
        } else {
            faults += 1;
            if pages.len() == capacity && capacity > 0 {
                pages.remove(0);
            }
        }
        if capacity > 0 {
            pages.push(p);
        }
    }
    faults
}

fn trace(seed: u64, len: usize, pages: u64) -> Vec<u64> {
    let mut r = rng(seed);
    // skewed: a hot set plus a uniform tail
    (0..len)
        .map(|_| {
            let p = if r.gen_bool(0.6) {
                r.gen_range(0..pages / 8 + 1)
            } else {
                r.gen_range(0..pages)
            };
            p * PAGE_BYTES + r.gen_range(0..PAGE_BYTES)
        })
        .collect()
}

#[test]
fn lru_matches_reference_on_seeded_traces() {
    for seed in 0..50 {
        let t = trace(seed, 3000, 200);
        for cap in [0, 1, 7, 32, 150, 250] {
            assert_eq!(
                simulate_page_faults(t.iter().copied(), cap),
                naive_lru(&t, cap),
                "seed {seed} cap {cap}"
            );
        }
    }
}

/// Random snapshot with `n` objects of 64 bytes and random edges.
fn random_snapshot(seed: u64, n: usize) -> HeapSnapshot {
    let mut r = rng(seed);
    let addrs: Vec<u64> = (0..n as u64).map(|i| 0x10000 + 64 * i).collect();
    let records = addrs
        .iter()
        .map(|a| Record {
            addr: *a,
            size: 64,
            class: 1,
            color: None,
            refs: (0..r.gen_range(0..3))
                .map(|_| {
                    if r.gen_bool(0.8) {
                        addrs[r.gen_range(0..n)]
                    } else {
                        0
                    }
                })
                .collect(),
        })
        .collect();
    HeapSnapshot::new(0, records)
}

/// Brute force: for each object, the first root whose own BFS reaches it.
fn brute_force_colors(s: &HeapSnapshot, roots: &[u64]) -> Vec<Option<u32>> {
    let reach: Vec<HashSet<u64>> = roots
        .iter()
        .map(|root| {
            let mut seen = HashSet::from([*root]);
            let mut q = VecDeque::from([*root]);
            while let Some(a) = q.pop_front() {
                let r = &s.records[s.index_of(a).unwrap()];
                for v in r.refs.iter().filter(|v| **v != 0) {
                    if seen.insert(*v) {
                        q.push_back(*v);
                    }
                }
            }
            seen
        })
        .collect();
    s.records
        .iter()
        .map(|r| {
            reach
                .iter()
                .position(|set| set.contains(&r.addr))
                .map(|i| i as u32)
        })
        .collect()
}

#[test]
fn coloring_matches_brute_force() {
    for seed in 0..30 {
        let s = random_snapshot(seed, 400);
        let mut r = rng(seed + 1000);
        let roots: Vec<u64> = (0..12)
            .map(|_| s.records[r.gen_range(0..s.len())].addr)
            .collect();
        let c = color_subgraphs(&s, &roots).unwrap();
        let got: Vec<Option<u32>> = c.records.iter().map(|r| r.color).collect();
        assert_eq!(got, brute_force_colors(&s, &roots), "seed {seed}");
        assert_eq!(color_subgraphs(&s, &roots).unwrap(), c);
    }
}

#[test]
fn heap_snapshot_counts_marked_objects_and_round_trips() {
    let (mut heap, c) = heap_with(config(2 << 20, Mode::Bda, 2));
    let mut r = rng(5);
    let handles = random_heap(&mut heap, &c, &mut r, 1500);
    heap.minor_collect().unwrap();
    let roots: Vec<_> = handles.iter().map(|h| heap.root(*h)).collect();
    let snap = take_snapshot(&heap, &roots, 3).unwrap();
    assert_eq!(snap.len(), heap.marked_set().len());
    assert!(snap.records.iter().all(|r| r.color.is_some()));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("snap.txt");
    write_snapshot(&snap, std::fs::File::create(&path).unwrap()).unwrap();
    let back = read_snapshot(BufReader::new(std::fs::File::open(&path).unwrap())).unwrap();
    assert_eq!(back, snap);
    assert_eq!(back.seq, 3);
}

#[test]
fn empty_heap_writes_header_only() {
    let (heap, _) = heap_with(config(1 << 20, Mode::Base, 1));
    let snap = take_snapshot(&heap, &[], 0).unwrap();
    let mut buf = Vec::new();
    write_snapshot(&snap, &mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1);
    assert_eq!(objects_per_page(&snap), 0.0);
}

proptest! {
    #[test]
    fn faults_never_increase_with_capacity(seed in any::<u64>(), cap in 0usize..64) {
        let t = trace(seed, 500, 80);
        let f = |c| simulate_page_faults(t.iter().copied(), c);
        prop_assert!(f(cap + 1) <= f(cap));
    }

    #[test]
    fn objects_per_page_is_translation_invariant(seed in any::<u64>(), pages in 0u64..1000) {
        let s = random_snapshot(seed, 200);
        let c = color_subgraphs(&s, &[s.records[0].addr, s.records[100].addr]).unwrap();
        prop_assert_eq!(objects_per_page(&c), objects_per_page(&c.translated(pages * PAGE_BYTES)));
    }
}
