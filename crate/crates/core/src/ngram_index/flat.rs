//! Linear-probing table for packed n-gram keys.
//!
//! One 16-byte entry per key, so a probe touches a single cache line. The
//! counting loop issues [`FlatTable::prefetch`] a few keys ahead of the
//! probe; on large corpora nearly every first sighting of an n-gram in a
//! document is a cache miss, and overlapping those misses is most of the
//! speed.

const MIN_CAPACITY: usize = 1 << 10;

#[derive(Clone, Copy, Default)]
#[repr(C)]
struct Entry {
    key: u64,
    // zero marks an empty entry; live entries always count at least one
    count: u32,
    last_doc: u32,
}

pub(crate) struct FlatTable {
    entries: Vec<Entry>,
    len: usize,
}

impl Default for FlatTable {
    fn default() -> Self {
        FlatTable {
            entries: vec![Entry::default(); MIN_CAPACITY],
            len: 0,
        }
    }
}

impl FlatTable {
    pub(crate) fn len(&self) -> usize {
        self.len
    }

    #[inline]
    fn mask(&self) -> usize {
        self.entries.len() - 1
    }

    /// Hint that `hash` will be probed soon.
    #[inline]
    pub(crate) fn prefetch(&self, hash: u64) {
        let i = hash as usize & self.mask();
        prefetch_read(self.entries.as_ptr().wrapping_add(i));
    }

    /// Position of `key`, or of the empty entry where it belongs.
    #[inline]
    fn find(&self, key: u64, hash: u64) -> usize {
        let mask = self.mask();
        let mut i = hash as usize & mask;
        loop {
            let e = &self.entries[i];
            if e.count == 0 || e.key == key {
                return i;
            }
            i = (i + 1) & mask;
        }
    }

    /// Counts `doc` once for `key`; `hash` must be the same for every call
    /// with that key.
    #[inline]
    pub(crate) fn observe(&mut self, key: u64, hash: u64, doc: u32) {
        let i = self.find(key, hash);
        let e = &mut self.entries[i];
        if e.count == 0 {
            *e = Entry {
                key,
                count: 1,
                last_doc: doc,
            };
            self.inserted();
        } else if e.last_doc != doc {
            e.last_doc = doc;
            e.count += 1;
        }
    }

    /// Adds `count` documents that no later `observe` call will repeat.
    pub(crate) fn absorb(&mut self, key: u64, hash: u64, count: u32, no_doc: u32) {
        let i = self.find(key, hash);
        let e = &mut self.entries[i];
        if e.count == 0 {
            *e = Entry {
                key,
                count,
                last_doc: no_doc,
            };
            self.inserted();
        } else {
            e.count += count;
        }
    }

    fn inserted(&mut self) {
        self.len += 1;
        // grow past 7/8 load
        if self.len * 8 > self.entries.len() * 7 {
            self.rehash(self.entries.len() * 2);
        }
    }

    fn rehash(&mut self, capacity: usize) {
        let old = std::mem::replace(&mut self.entries, vec![Entry::default(); capacity]);
        let mask = capacity - 1;
        for e in old.into_iter().filter(|e| e.count > 0) {
            let mut i = super::count::key_hash(e.key) as usize & mask;
            while self.entries[i].count != 0 {
                i = (i + 1) & mask;
            }
            self.entries[i] = e;
        }
    }

    /// Every `(key, count)`, leaving the table empty and small.
    pub(crate) fn take_counts(&mut self) -> Vec<(u64, u32)> {
        let out = self
            .entries
            .iter()
            .filter(|e| e.count > 0)
            .map(|e| (e.key, e.count))
            .collect();
        *self = FlatTable::default();
        out
    }
}

#[inline(always)]
fn prefetch_read<T>(p: *const T) {
    #[cfg(target_arch = "x86_64")]
    // SAFETY: prefetch is a hint and never dereferences; any address is allowed.
    unsafe {
        std::arch::x86_64::_mm_prefetch(p as *const i8, std::arch::x86_64::_MM_HINT_T0);
    }
    #[cfg(not(target_arch = "x86_64"))]
    let _ = p;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ngram_index::count::key_hash;

    #[test]
    fn counts_documents_once_and_grows() {
        let mut t = FlatTable::default();
        for doc in 0..3u32 {
            for k in 0..5000u64 {
                t.observe(
                    k % (1000 * (doc as u64 + 1)),
                    key_hash(k % (1000 * (doc as u64 + 1))),
                    doc,
                );
            }
        }
        assert_eq!(t.len(), 3000);
        let mut counts = t.take_counts();
        counts.sort_unstable();
        assert_eq!(counts[0], (0, 3));
        assert_eq!(counts[1500], (1500, 2));
        assert_eq!(counts[2999], (2999, 1));
        assert_eq!(t.len(), 0);
    }

    #[test]
    fn absorb_adds_and_any_key_is_valid() {
        let mut t = FlatTable::default();
        t.observe(u64::MAX, key_hash(u64::MAX), 0);
        t.absorb(u64::MAX, key_hash(u64::MAX), 4, u32::MAX);
        t.absorb(0, key_hash(0), 2, u32::MAX);
        t.observe(0, key_hash(0), 1);
        let mut c = t.take_counts();
        c.sort_unstable();
        assert_eq!(c, vec![(0, 3), (u64::MAX, 5)]);
    }
}
