use std::collections::{BTreeMap, HashMap};

use super::PAGE_BYTES;

/// LRU page cache over byte addresses. A capacity of 0 faults on every
/// access.
#[derive(Clone, Debug)]
pub struct PageCache {
    capacity: usize,
    clock: u64,
    // page -> last use, and the inverse for eviction
    last_use: HashMap<u64, u64>,
    by_age: BTreeMap<u64, u64>,
    faults: u64,
    accesses: u64,
}

impl PageCache {
    pub fn new(capacity: usize) -> Self {
        PageCache {
            capacity,
            clock: 0,
            last_use: HashMap::new(),
            by_age: BTreeMap::new(),
            faults: 0,
            accesses: 0,
        }
    }

    /// Touches the page holding `addr`; returns whether it faulted.
    pub fn access(&mut self, addr: u64) -> bool {
        let page = addr / PAGE_BYTES;
        self.accesses += 1;
        self.clock += 1;
        if let Some(old) = self.last_use.insert(page, self.clock) {
            self.by_age.remove(&old);
            self.by_age.insert(self.clock, page);
            return false;
        }
        self.faults += 1;
        if self.capacity == 0 {
            self.last_use.remove(&page);
            return true;
        }
        if self.last_use.len() > self.capacity {
            let (_, victim) = self.by_age.pop_first().expect("resident page");
            self.last_use.remove(&victim);
        }
        self.by_age.insert(self.clock, page);
        true
    }

    pub fn faults(&self) -> u64 {
        self.faults
    }

    pub fn accesses(&self) -> u64 {
        self.accesses
    }

    pub fn resident(&self) -> usize {
        self.last_use.len()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }
}

pub fn simulate_page_faults(trace: impl IntoIterator<Item = u64>, capacity: usize) -> u64 {
    let mut cache = PageCache::new(capacity);
    for a in trace {
        cache.access(a);
    }
    cache.faults()
}

#[cfg(test)]
mod tests {
    use super::*;

    const A: u64 = 0x1000;
    const B: u64 = 0x2000;

    #[test]
    fn small_traces() {
        assert_eq!(simulate_page_faults([A, A, A], 1), 1);
        assert_eq!(simulate_page_faults([A, B, A, B], 1), 4);
        assert_eq!(simulate_page_faults([A, B, A, B], 2), 2);
        assert_eq!(simulate_page_faults([A, A + 8, A + 4095], 1), 1);
        assert_eq!(simulate_page_faults([A, A, A], 0), 3);
    }

    #[test]
    fn resident_set_stays_within_capacity() {
        let mut c = PageCache::new(3);
        for i in 0..100u64 {
            c.access((i * 7 % 11) * PAGE_BYTES);
            assert!(c.resident() <= 3);
        }
    }
}
