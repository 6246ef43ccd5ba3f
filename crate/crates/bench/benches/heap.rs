use std::hint::black_box;

use bdaheap::Mode;
use bdaheap_bench::fixture;
use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

fn allocation(c: &mut Criterion) {
    let mut g = c.benchmark_group("allocate_maps");
    for (name, mode) in [("base", Mode::Base), ("bda", Mode::Bda)] {
        g.bench_function(name, |b| {
            let mut f = fixture(mode, 32 << 20, 2).expect("heap");
            b.iter(|| black_box(f.small_map().expect("alloc")));
        });
    }
    g.finish();
}

fn minor_gc(c: &mut Criterion) {
    let mut g = c.benchmark_group("minor_gc_with_live_maps");
    for (name, mode) in [("base", Mode::Base), ("bda", Mode::Bda)] {
        g.bench_function(name, |b| {
            b.iter_batched(
                || {
                    let mut f = fixture(mode, 32 << 20, 2).expect("heap");
                    for _ in 0..500 {
                        let m = f.small_map().expect("alloc");
                        f.heap.add_root(m);
                    }
                    f
                },
                |mut f| black_box(f.heap.minor_collect().expect("gc")),
                BatchSize::LargeInput,
            );
        });
    }
    g.finish();
}

fn full_gc(c: &mut Criterion) {
    c.bench_function("full_gc_half_garbage", |b| {
        b.iter_batched(
            || {
                let mut f = fixture(Mode::Bda, 32 << 20, 2).expect("heap");
                let mut drop = Vec::new();
                for i in 0..1000 {
                    let m = f.small_map().expect("alloc");
                    let h = f.heap.add_root(m);
                    if i % 2 == 1 {
                        drop.push(h);
                    }
                }
                f.heap.minor_collect().expect("gc");
                // half of the promoted maps become garbage
                for h in drop {
                    f.heap.remove_root(h);
                }
                f
            },
            |mut f| black_box(f.heap.full_collect().expect("gc")),
            BatchSize::LargeInput,
        );
    });
}

criterion_group!(benches, allocation, minor_gc, full_gc);
criterion_main!(benches);
