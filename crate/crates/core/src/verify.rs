//! Heap verifier: structural checks run after collections when
//! `HeapConfig::verify` is set, and directly by tests.

use std::collections::{HashMap, HashSet, VecDeque};

use crate::heap::Heap;
use crate::object::{header_class, ManagedRef, MARK_BIT};

impl Heap {
    /// Objects reachable from the roots, breadth first.
    pub fn reachable(&self) -> HashSet<u64> {
        self.reachable_from(self.root_refs().into_iter().map(|r| r.addr()))
    }

    pub(crate) fn reachable_from(&self, from: impl IntoIterator<Item = u64>) -> HashSet<u64> {
        let mut seen = HashSet::new();
        let mut q: VecDeque<u64> = from.into_iter().filter(|a| *a != 0).collect();
        while let Some(a) = q.pop_front() {
            if !seen.insert(a) {
                continue;
            }
            q.extend(self.fields_of(a).filter(|v| *v != 0 && !seen.contains(v)));
        }
        seen
    }

    /// Runs every check; returns one message per violation.
    pub fn verify(&self) -> Vec<String> {
        let mut out = self.check_structure();
        if out.is_empty() {
            out.extend(self.check_cards());
            out.extend(self.check_container_purity());
            out.extend(self.check_queue());
        }
        out
    }

    /// Parsability of the old generation and validity of every reachable
    /// object and reference.
    pub fn check_structure(&self) -> Vec<String> {
        let mut out = Vec::new();
        let nclasses = self.classes.shapes().len() as u32;
        let mut starts = HashSet::new();
        for area in self.old_areas() {
            let mut a = area.start;
            while a < area.end {
                let w0 = self.mem.load(a);
                if header_class(w0) >= nclasses {
                    out.push(format!("bad class id at {a:#x} in area {area:?}"));
                    return out;
                }
                starts.insert(a);
                let size = self.size_at(a);
                if size == 0 {
                    out.push(format!("zero-sized object at {a:#x}"));
                    return out;
                }
                a += size;
            }
            if a != area.end {
                out.push(format!(
                    "object walk overruns area {area:?} (ends at {a:#x})"
                ));
            }
        }
        let young = self.geometry().young_range();
        for a in self.reachable() {
            let w0 = self.mem.load(a);
            let class = header_class(w0);
            if class == 0 || class >= nclasses {
                out.push(format!("reachable {a:#x} has class {class}"));
                continue;
            }
            if w0 & MARK_BIT != 0 || self.mem.load(a + 8) != 0 {
                out.push(format!("reachable {a:#x} still marked or forwarded"));
            }
            if !young.contains(a) && !starts.contains(&a) {
                out.push(format!(
                    "reachable {a:#x} is not an old-generation object start"
                ));
            }
            if young.contains(a) {
                let eden = self.geometry().eden;
                let from = self.from_space();
                let ok = (a >= eden.start && a < self.eden_top)
                    || (a >= from.start && a < self.from_top);
                if !ok {
                    out.push(format!("reachable {a:#x} lies in an empty young area"));
                }
            }
        }
        out
    }

    /// Every old object holding a young reference overlaps a dirty card.
    pub fn check_cards(&self) -> Vec<String> {
        let mut out = Vec::new();
        for obj in self.old_objects() {
            let a = obj.addr();
            if !self.fields_of(a).any(|v| v != 0 && self.is_young(v)) {
                continue;
            }
            let end = a + self.size_at(a);
            let covered = (a..end)
                .step_by(crate::barrier::CARD_BYTES as usize)
                .any(|x| self.cards.is_dirty_addr(x))
                || self.cards.is_dirty_addr(end - 1);
            if !covered {
                out.push(format!(
                    "old object {a:#x} has a young reference but no dirty card"
                ));
            }
        }
        out
    }

    /// Live objects in a container's segments are reachable from its parent.
    /// Orphaned containers (dead parent) are skipped.
    pub fn check_container_purity(&self) -> Vec<String> {
        let mut out = Vec::new();
        let live = self.reachable();
        for c in self.layout.containers() {
            if c.parent.is_null() {
                continue;
            }
            let mut reach: Option<HashSet<u64>> = None;
            for sid in self.layout.chain(c.id) {
                let s = self.layout.segment(sid);
                if s.owner != Some(c.id) {
                    out.push(format!(
                        "segment {} in chain of container {} has owner {:?}",
                        sid.0, c.id.0, s.owner
                    ));
                }
                for a in self.objects_in(crate::layout::AddrRange::new(s.range.start, s.top)) {
                    if header_class(self.mem.load(a)) == 0 || !live.contains(&a) {
                        continue;
                    }
                    let r = reach.get_or_insert_with(|| self.reachable_from([c.parent.addr()]));
                    if !r.contains(&a) {
                        out.push(format!(
                            "object {a:#x} in segment {} is not reachable from parent {} of container {}",
                            sid.0, c.parent, c.id.0
                        ));
                    }
                }
            }
        }
        out
    }

    /// Queue entries are unique young bda roots, and every live young bda
    /// instance is queued.
    pub fn check_queue(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut seen: HashMap<u64, usize> = HashMap::new();
        for e in self.queue.iter().map(|e| e.unpack()) {
            *seen.entry(e.root.addr()).or_default() += 1;
            if !self.is_young(e.root.addr()) {
                out.push(format!("queued root {} is not young", e.root));
            }
        }
        for (a, n) in &seen {
            if *n > 1 {
                out.push(format!("root {} queued {n} times", ManagedRef(*a)));
            }
        }
        let shapes = self.classes.shapes();
        for a in self.reachable() {
            let class = header_class(self.mem.load(a)) as usize;
            if self.is_young(a) && shapes[class].bda_space.is_some() && !seen.contains_key(&a) {
                out.push(format!(
                    "live young bda instance {} is not queued",
                    ManagedRef(a)
                ));
            }
        }
        out
    }
}
