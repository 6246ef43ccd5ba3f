//! Parallel marking from the root set.

use std::sync::atomic::{AtomicU64, Ordering};

use super::FullCtx;
use crate::heap::field_addr;
use crate::layout::REGION_BYTES;
use crate::object::MARK_BIT;
use crate::workers::{self, Local};

/// Mark bits live in object headers; this holds what marking accumulates
/// besides them.
pub struct MarkState {
    /// Live bytes of objects starting in each old region.
    pub region_live: Vec<u64>,
    /// Marked young objects, address order.
    pub young: Vec<u64>,
    pub marked_objects: u64,
}

enum Task {
    Value(u64),
    Object(u64),
}

#[derive(Default)]
struct MarkWorker {
    young: Vec<u64>,
    marked: u64,
}

impl FullCtx<'_> {
    fn mark_value(&self, w: &mut MarkWorker, live: &[AtomicU64], local: &Local<'_, Task>, v: u64) {
        if v == 0 || self.mem.fetch_or(v, MARK_BIT) & MARK_BIT != 0 {
            return;
        }
        w.marked += 1;
        if self.young.contains(v) {
            w.young.push(v);
        } else {
            let r = ((v - self.old_base) / REGION_BYTES) as usize;
            live[r].fetch_add(self.size(v), Ordering::Relaxed);
        }
        local.push(Task::Object(v));
    }

    pub(super) fn mark(&self, roots: &[u64]) -> MarkState {
        let live: Vec<AtomicU64> = (0..self.region_count).map(|_| AtomicU64::new(0)).collect();
        let seed = roots.iter().map(|v| Task::Value(*v)).collect();
        let states = workers::run(
            self.workers,
            seed,
            |_| MarkWorker::default(),
            |w, local, t| match t {
                Task::Value(v) => self.mark_value(w, &live, local, v),
                Task::Object(o) => {
                    for i in 0..self.refs(o) {
                        let v = self.mem.load(field_addr(o, i));
                        self.mark_value(w, &live, local, v);
                    }
                }
            },
        );
        let mut young: Vec<u64> = Vec::new();
        let mut marked = 0;
        for s in states {
            young.extend(s.young);
            marked += s.marked;
        }
        young.sort_unstable();
        MarkState {
            region_live: live.into_iter().map(AtomicU64::into_inner).collect(),
            young,
            marked_objects: marked,
        }
    }
}
