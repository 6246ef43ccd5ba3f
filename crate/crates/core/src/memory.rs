//! Word-addressed backing store for the managed heap.
//!
//! Addresses are byte offsets into the arena and are always 8-byte aligned.
//! Every word is an `AtomicU64` so that mutator threads and GC workers can
//! share the arena without `unsafe`; plain loads and stores use relaxed
//! ordering, which compiles to ordinary moves on the platforms we target.

use std::sync::atomic::{AtomicU64, Ordering};

pub const WORD: u64 = 8;

pub(crate) struct Memory {
    words: Box<[AtomicU64]>,
}

impl Memory {
    pub fn new(bytes: u64) -> Self {
        debug_assert_eq!(bytes % WORD, 0);
        let words = (0..bytes / WORD).map(|_| AtomicU64::new(0)).collect();
        Memory { words }
    }

    #[inline]
    pub fn size(&self) -> u64 {
        self.words.len() as u64 * WORD
    }

    #[inline]
    fn word(&self, addr: u64) -> &AtomicU64 {
        debug_assert_eq!(addr % WORD, 0, "unaligned address {addr:#x}");
        &self.words[(addr / WORD) as usize]
    }

    #[inline]
    pub fn load(&self, addr: u64) -> u64 {
        self.word(addr).load(Ordering::Relaxed)
    }

    #[inline]
    pub fn store(&self, addr: u64, value: u64) {
        self.word(addr).store(value, Ordering::Relaxed)
    }

    #[inline]
    pub fn load_acquire(&self, addr: u64) -> u64 {
        self.word(addr).load(Ordering::Acquire)
    }

    #[inline]
    pub fn store_release(&self, addr: u64, value: u64) {
        self.word(addr).store(value, Ordering::Release)
    }

    #[inline]
    pub fn compare_exchange(&self, addr: u64, current: u64, new: u64) -> Result<u64, u64> {
        self.word(addr)
            .compare_exchange(current, new, Ordering::AcqRel, Ordering::Acquire)
    }

    #[inline]
    pub fn fetch_or(&self, addr: u64, bits: u64) -> u64 {
        self.word(addr).fetch_or(bits, Ordering::AcqRel)
    }

    /// Copies `bytes` from `src` to `dst` with memmove semantics.
    pub fn copy_words(&self, src: u64, dst: u64, bytes: u64) {
        if src == dst {
            return;
        }
        let n = (bytes / WORD) as usize;
        let s = (src / WORD) as usize;
        let d = (dst / WORD) as usize;
        if dst > src && dst < src + bytes {
            for i in (0..n).rev() {
                let v = self.words[s + i].load(Ordering::Relaxed);
                self.words[d + i].store(v, Ordering::Relaxed);
            }
        } else {
            for i in 0..n {
                let v = self.words[s + i].load(Ordering::Relaxed);
                self.words[d + i].store(v, Ordering::Relaxed);
            }
        }
    }

    pub fn zero(&self, addr: u64, bytes: u64) {
        let start = (addr / WORD) as usize;
        for w in &self.words[start..start + (bytes / WORD) as usize] {
            w.store(0, Ordering::Relaxed);
        }
    }

    pub fn read_bytes(&self, addr: u64, len: usize) -> Vec<u8> {
        let mut out = Vec::with_capacity(len);
        let mut a = addr;
        while out.len() < len {
            let w = self.load(a).to_le_bytes();
            let take = (len - out.len()).min(8);
            out.extend_from_slice(&w[..take]);
            a += WORD;
        }
        out
    }

    /// Writes `bytes` starting at the word-aligned `addr`. A trailing partial
    /// word is zero-padded.
    pub fn write_bytes(&self, addr: u64, bytes: &[u8]) {
        for (i, chunk) in bytes.chunks(8).enumerate() {
            let mut w = [0u8; 8];
            w[..chunk.len()].copy_from_slice(chunk);
            self.store(addr + i as u64 * WORD, u64::from_le_bytes(w));
        }
    }
}

#[inline]
pub const fn align_up(value: u64, align: u64) -> u64 {
    value.div_ceil(align) * align
}

#[inline]
pub const fn align_down(value: u64, align: u64) -> u64 {
    value / align * align
}
