use std::time::Instant;

use bdaheap::{ClassId, Heap, HeapConfig, ManagedRef, Mode, RootHandle};
use rand::Rng;

use super::{empty_report, rng};
use crate::config::{CliError, RunConfig};
use crate::report::{AllocTiming, GcSummary, MetricsReport};

/// (name, reference fields, scalar bytes) of the allocated mix.
pub const ALLOC_CLASSES: [(&str, usize, usize); 5] = [
    ("A", 0, 8),
    ("B", 1, 16),
    ("C", 2, 0),
    ("D", 0, 32),
    ("E", 3, 8),
];
/// Tracked classes, in the order they are enabled.
pub const TRACKED_CLASSES: [&str; 3] = ["C", "B", "E"];
const TRACKED_COUNTS: [usize; 3] = [0, 1, 3];
/// One allocation in this many is kept live in a ring of roots.
const KEEP_EVERY: usize = 64;
const RING: usize = 256;

struct Stress {
    heap: Heap,
    classes: Vec<ClassId>,
    ring: Vec<RootHandle>,
    next: usize,
}

impl Stress {
    fn new(mut cfg: HeapConfig, tracked: Option<usize>) -> Result<Self, CliError> {
        match tracked {
            None => cfg.mode = Mode::Base,
            Some(t) => {
                cfg.mode = Mode::Bda;
                cfg.bda.classes = TRACKED_CLASSES[..t].iter().map(|c| c.to_string()).collect();
            }
        }
        let mut heap = Heap::new(cfg)?;
        let classes = ALLOC_CLASSES
            .iter()
            .map(|(n, r, s)| heap.register_class(n, *r, *s).map(|d| d.class_id))
            .collect::<Result<Vec<_>, _>>()?;
        let ring = (0..RING).map(|_| heap.add_root(ManagedRef::NULL)).collect();
        Ok(Stress {
            heap,
            classes,
            ring,
            next: 0,
        })
    }

    /// Allocates the mix; objects with reference fields point at the
    /// previous allocation.
    fn rep(&mut self, mix: &[u8]) -> Result<(), CliError> {
        let mut prev = ManagedRef::NULL;
        for (i, &c) in mix.iter().enumerate() {
            let (_, refs, _) = ALLOC_CLASSES[c as usize];
            let r = [prev];
            let o = self
                .heap
                .allocate(self.classes[c as usize], &r[..refs.min(1)], &[])?;
            if i % KEEP_EVERY == 0 {
                self.heap.set_root(self.ring[self.next], o);
                self.next = (self.next + 1) % RING;
            }
            prev = o;
        }
        Ok(())
    }
}

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    xs[xs.len() / 2]
}

fn percentile(xs: &mut [f64], q: f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    xs[((xs.len() - 1) as f64 * q).round() as usize]
}

/// Wall time of allocation bursts with 0, 1 and 3 tracked classes against
/// the base collector. Configurations run interleaved, rotating which goes
/// first, so drift hits all of them alike.
pub fn run_allocstress(cfg: &RunConfig) -> Result<MetricsReport, CliError> {
    let spec = &cfg.workload;
    let mut report = empty_report(cfg);
    let mut r = rng(spec.seed, 2);
    let mix: Vec<u8> = (0..spec.operations)
        .map(|_| r.gen_range(0..ALLOC_CLASSES.len() as u8))
        .collect();

    let mut runs: Vec<Stress> = Vec::new();
    runs.push(Stress::new(cfg.heap.clone(), None)?);
    for t in TRACKED_COUNTS {
        runs.push(Stress::new(cfg.heap.clone(), Some(t))?);
    }
    let mut times: Vec<Vec<f64>> = vec![Vec::new(); runs.len()];
    let mut pauses: Vec<Vec<f64>> = vec![Vec::new(); runs.len()];
    for rep in 0..spec.warmups + spec.repetitions {
        for k in 0..runs.len() {
            let i = (rep + k) % runs.len();
            let seen = runs[i].heap.gc_history().len();
            let start = Instant::now();
            runs[i].rep(&mix)?;
            let ns = start.elapsed().as_nanos() as f64;
            if rep >= spec.warmups {
                let pause: f64 = runs[i].heap.gc_history()[seen..]
                    .iter()
                    .map(|h| h.pause.as_nanos() as f64)
                    .sum();
                times[i].push(ns);
                pauses[i].push(pause);
            }
        }
    }
    let mutator: Vec<Vec<f64>> = times
        .iter()
        .zip(&pauses)
        .map(|(t, p)| t.iter().zip(p).map(|(t, p)| t - p).collect())
        .collect();

    report.base_alloc_ns = median(&mut times[0].clone());
    let base_mutator = median(&mut mutator[0].clone());
    for (j, t) in TRACKED_COUNTS.iter().enumerate() {
        let mut ratios: Vec<f64> = times[j + 1]
            .iter()
            .zip(&times[0])
            .map(|(a, b)| a / b)
            .collect();
        let (queue_len, tracked_allocations) = queue_probe(cfg, *t, &mix)?;
        let median_ns = median(&mut times[j + 1].clone());
        report.alloc.push(AllocTiming {
            tracked_classes: *t,
            median_ns,
            ratio: median_ns / report.base_alloc_ns,
            ratio_low: percentile(&mut ratios, 0.1),
            ratio_high: percentile(&mut ratios, 0.9),
            mutator_ratio: median(&mut mutator[j + 1].clone()) / base_mutator,
            median_pause_ns: median(&mut pauses[j + 1].clone()),
            queue_len,
            tracked_allocations,
        });
    }
    report.ops = spec.operations * spec.repetitions as u64;
    report.gc = GcSummary::of(&runs.last().expect("bda run").heap);
    Ok(report)
}

/// Allocates a prefix of the mix that fits in eden on a fresh heap and
/// returns (queue length, tracked allocations).
fn queue_probe(cfg: &RunConfig, tracked: usize, mix: &[u8]) -> Result<(usize, u64), CliError> {
    let mut s = Stress::new(cfg.heap.clone(), Some(tracked))?;
    let eden = s.heap.geometry().eden.len();
    let mut used = 0;
    let mut count = 0u64;
    let mut prev = ManagedRef::NULL;
    for &c in mix {
        let (name, refs, scalar) = ALLOC_CLASSES[c as usize];
        used += 16 + 8 * (refs + scalar.div_ceil(8)) as u64;
        // stay well clear of the first collection
        if used > eden / 2 {
            break;
        }
        let r = [prev];
        prev = s
            .heap
            .allocate(s.classes[c as usize], &r[..refs.min(1)], &[])?;
        count += TRACKED_CLASSES[..tracked].contains(&name) as u64;
    }
    debug_assert!(s.heap.gc_history().is_empty());
    Ok((s.heap.queue_len(), count))
}
