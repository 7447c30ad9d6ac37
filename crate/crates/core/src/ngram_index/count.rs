//! Exact document-frequency counting, sharded by n-gram hash.
//!
//! Each shard keeps an in-memory map from n-gram to `(count, last_doc)`;
//! n-grams up to eight bytes are packed into a `u64` and live in a flat
//! open-addressing table.
//! The `last_doc` stamp lets a document contribute at most once without a
//! per-document dedup pass. When a shard grows past its entry budget it is
//! written out as a sorted run file at the next document boundary; runs are
//! folded back in one shard at a time when counting finishes, so peak memory
//! is bounded by the largest shard.

use std::borrow::Borrow;
use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs::File;
use std::hash::{BuildHasher, Hash};
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use rustc_hash::{FxBuildHasher, FxHashMap};
use tempfile::TempDir;

use super::flat::FlatTable;
use super::gram::{for_each_packed, for_each_window, NGram, PACKED_MAX};
use crate::corpus::ByteStream;
use crate::error::{Error, Result};

const NO_DOC: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DocFreqTable {
    pub n: usize,
    pub corpus_size: u64,
    pub entries: BTreeMap<NGram, u64>,
}

impl DocFreqTable {
    pub fn get(&self, gram: &NGram) -> u64 {
        self.entries.get(gram).copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `HEXGRAM<TAB>count` lines sorted by n-gram, after one header line.
    pub fn to_tsv(&self) -> String {
        let mut out = format!("#docfreq n={} corpus_size={}\n", self.n, self.corpus_size);
        for (gram, count) in &self.entries {
            let _ = writeln!(out, "{gram}\t{count}");
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let header = lines
            .next()
            .map(|(_, l)| l)
            .ok_or_else(|| Error::parse(1, "empty document-frequency file"))?;
        let fields = parse_header(header, "#docfreq", 1)?;
        let n: u64 = header_value(&fields, "n", 1)?;
        let corpus_size = header_value(&fields, "corpus_size", 1)?;
        let mut entries = BTreeMap::new();
        for (idx, line) in lines {
            if line.is_empty() {
                continue;
            }
            let (gram, count) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(idx + 1, "expected HEXGRAM<TAB>count"))?;
            let gram: NGram = gram.parse().map_err(|e: Error| Error::parse(idx + 1, e.to_string()))?;
            if gram.len() != n as usize {
                return Err(Error::parse(idx + 1, format!("n-gram length differs from n={n}")));
            }
            let count: u64 = count
                .parse()
                .map_err(|_| Error::parse(idx + 1, format!("bad count `{count}`")))?;
            entries.insert(gram, count);
        }
        Ok(DocFreqTable {
            n: n as usize,
            corpus_size,
            entries,
        })
    }
}

pub(crate) fn parse_header<'a>(line: &'a str, tag: &str, line_no: usize) -> Result<Vec<(&'a str, &'a str)>> {
    let mut parts = line.split_whitespace();
    if parts.next() != Some(tag) {
        return Err(Error::parse(line_no, format!("expected `{tag}` header")));
    }
    parts
        .map(|p| {
            p.split_once('=')
                .ok_or_else(|| Error::parse(line_no, format!("bad header field `{p}`")))
        })
        .collect()
}

pub(crate) fn header_value<T: std::str::FromStr>(fields: &[(&str, &str)], key: &str, line_no: usize) -> Result<T> {
    fields
        .iter()
        .find(|(k, _)| *k == key)
        .and_then(|(_, v)| v.parse().ok())
        .ok_or_else(|| Error::parse(line_no, format!("header lacks a valid `{key}`")))
}

/// n-grams whose document frequency is at least `min_df`.
pub fn filter_by_frequency(table: &DocFreqTable, min_df: u64) -> Result<Vec<NGram>> {
    if min_df == 0 {
        return Err(Error::arg("min_df must be at least 1"));
    }
    Ok(table
        .entries
        .iter()
        .filter(|(_, &c)| c >= min_df)
        .map(|(g, _)| g.clone())
        .collect())
}

#[derive(Debug, Clone)]
pub struct CountOptions {
    pub shard_count: usize,
    /// Distinct n-grams a shard may hold before it is spilled to disk.
    pub max_entries_per_shard: usize,
    /// Parent of the per-counter directory holding run files; the system
    /// temporary directory when `None`.
    pub spill_dir: Option<PathBuf>,
}

impl Default for CountOptions {
    fn default() -> Self {
        CountOptions {
            shard_count: 16,
            max_entries_per_shard: 1 << 24,
            spill_dir: None,
        }
    }
}

impl CountOptions {
    pub fn with_shards(shard_count: usize) -> Self {
        CountOptions {
            shard_count,
            ..Default::default()
        }
    }
}

trait GramKey: Eq + Hash + Ord + Clone + Send + Sized {
    type Map: SlotMap<Self>;
    fn shard_hash(&self) -> u64;
    fn write_to(&self, w: &mut impl Write) -> io::Result<()>;
    fn read_from(r: &mut impl Read, n: usize) -> io::Result<Option<Self>>;
    fn to_ngram(&self, n: usize) -> NGram;
}

/// One shard's in-memory counts.
trait SlotMap<K>: Default + Send {
    /// Counts `doc` once for `key`.
    fn observe(&mut self, key: K, hash: u64, doc: u32);
    /// Adds counts from documents this map never sees again.
    fn absorb(&mut self, key: K, hash: u64, count: u32);
    fn len(&self) -> usize;
    /// Every `(key, count)`, emptying the map.
    fn take_counts(&mut self) -> Vec<(K, u32)>;
}

/// Murmur3 finalizer. The high half picks the shard, the low bits the
/// slot inside it.
#[inline]
pub(crate) fn key_hash(mut x: u64) -> u64 {
    x ^= x >> 33;
    x = x.wrapping_mul(0xff51_afd7_ed55_8ccd);
    x ^= x >> 33;
    x = x.wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    x ^ (x >> 33)
}

impl GramKey for u64 {
    type Map = FlatTable;

    #[inline]
    fn shard_hash(&self) -> u64 {
        key_hash(*self)
    }

    fn write_to(&self, w: &mut impl Write) -> io::Result<()> {
        w.write_all(&self.to_le_bytes())
    }

    fn read_from(r: &mut impl Read, _n: usize) -> io::Result<Option<Self>> {
        let mut buf = [0u8; 8];
        match read_exact_or_eof(r, &mut buf)? {
            true => Ok(Some(u64::from_le_bytes(buf))),
            false => Ok(None),
        }
    }

    fn to_ngram(&self, n: usize) -> NGram {
        NGram::from_packed(*self, n)
    }
}

impl SlotMap<u64> for FlatTable {
    #[inline]
    fn observe(&mut self, key: u64, hash: u64, doc: u32) {
        FlatTable::observe(self, key, hash, doc)
    }

    fn absorb(&mut self, key: u64, hash: u64, count: u32) {
        FlatTable::absorb(self, key, hash, count, NO_DOC)
    }

    fn len(&self) -> usize {
        FlatTable::len(self)
    }

    fn take_counts(&mut self) -> Vec<(u64, u32)> {
        FlatTable::take_counts(self)
    }
}

impl GramKey for Box<[u8]> {
    type Map = FxHashMap<Box<[u8]>, Slot>;

    fn shard_hash(&self) -> u64 {
        key_hash(FxBuildHasher.hash_one(&**self))
    }

    fn write_to(&self, w: &mut impl Write) -> io::Result<()> {
        w.write_all(self)
    }

    fn read_from(r: &mut impl Read, n: usize) -> io::Result<Option<Self>> {
        let mut buf = vec![0u8; n];
        match read_exact_or_eof(r, &mut buf)? {
            true => Ok(Some(buf.into_boxed_slice())),
            false => Ok(None),
        }
    }

    fn to_ngram(&self, _n: usize) -> NGram {
        NGram::new(self.to_vec())
    }
}

#[derive(Clone, Copy)]
struct Slot {
    count: u32,
    last_doc: u32,
}

impl<K: Eq + Hash + Send> SlotMap<K> for FxHashMap<K, Slot> {
    fn observe(&mut self, key: K, _hash: u64, doc: u32) {
        let slot = self.entry(key).or_insert(Slot {
            count: 0,
            last_doc: NO_DOC,
        });
        if slot.last_doc != doc {
            slot.last_doc = doc;
            slot.count += 1;
        }
    }

    fn absorb(&mut self, key: K, _hash: u64, count: u32) {
        self.entry(key).and_modify(|s| s.count += count).or_insert(Slot {
            count,
            last_doc: NO_DOC,
        });
    }

    fn len(&self) -> usize {
        HashMap::len(self)
    }

    fn take_counts(&mut self) -> Vec<(K, u32)> {
        std::mem::take(self).into_iter().map(|(k, s)| (k, s.count)).collect()
    }
}

/// Fills `buf`, returning `false` on a clean EOF before the first byte.
fn read_exact_or_eof(r: &mut impl Read, buf: &mut [u8]) -> io::Result<bool> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..])? {
            0 if filled == 0 => return Ok(false),
            0 => return Err(io::Error::new(io::ErrorKind::UnexpectedEof, "truncated run record")),
            k => filled += k,
        }
    }
    Ok(true)
}

struct Shards<K: GramKey> {
    maps: Vec<K::Map>,
    runs: Vec<Vec<PathBuf>>,
}

impl<K: GramKey> Shards<K> {
    fn new(count: usize) -> Self {
        Shards {
            maps: (0..count).map(|_| K::Map::default()).collect(),
            runs: vec![Vec::new(); count],
        }
    }

    #[inline]
    fn shard_of(&self, hash: u64) -> usize {
        (((hash >> 32) * self.maps.len() as u64) >> 32) as usize
    }

    #[inline]
    fn observe(&mut self, key: K, doc: u32) {
        let hash = key.shard_hash();
        let shard = self.shard_of(hash);
        self.maps[shard].observe(key, hash, doc);
    }

    fn spill_over_budget(&mut self, budget: usize, dir: &mut SpillDir, seq: &mut u64) -> Result<()> {
        for shard in 0..self.maps.len() {
            if self.maps[shard].len() <= budget {
                continue;
            }
            let path = dir
                .path()
                .map_err(|source| Error::Count { shard, source })?
                .join(format!("shard{shard:04}-run{seq:06}.bin"));
            *seq += 1;
            let mut entries = self.maps[shard].take_counts();
            entries.sort_unstable_by(|a, b| a.0.cmp(&b.0));
            write_run(&path, &entries).map_err(|source| Error::Count { shard, source })?;
            self.runs[shard].push(path);
        }
        Ok(())
    }

    fn merge(&mut self, mut other: Shards<K>) {
        for (mine, theirs) in self.maps.iter_mut().zip(&mut other.maps) {
            for (key, count) in theirs.take_counts() {
                let hash = key.shard_hash();
                mine.absorb(key, hash, count);
            }
        }
        for (mine, theirs) in self.runs.iter_mut().zip(other.runs) {
            mine.extend(theirs);
        }
    }

    fn finish(self, n: usize, min_df: u64) -> Result<BTreeMap<NGram, u64>> {
        let mut out = BTreeMap::new();
        for (shard, (mut map, runs)) in self.maps.into_iter().zip(self.runs).enumerate() {
            let mut counts: FxHashMap<K, u64> = map.take_counts().into_iter().map(|(k, c)| (k, c as u64)).collect();
            for path in runs {
                read_run::<K>(&path, n, &mut counts).map_err(|source| Error::Count { shard, source })?;
            }
            out.extend(
                counts
                    .into_iter()
                    .filter(|&(_, c)| c >= min_df)
                    .map(|(k, c)| (k.to_ngram(n), c)),
            );
        }
        Ok(out)
    }
}

impl Shards<u64> {
    /// Counts every window of `stream`, prefetching each key's slot
    /// `PIPELINE` keys before probing it.
    fn observe_stream(&mut self, stream: &ByteStream, n: usize, doc: u32) {
        const PIPELINE: usize = 16;
        let mut ring = [(0u64, 0u64, 0usize); PIPELINE];
        let mut queued = 0usize;
        for_each_packed(stream, n, |key| {
            let hash = key_hash(key);
            let shard = self.shard_of(hash);
            self.maps[shard].prefetch(hash);
            let at = queued % PIPELINE;
            if queued >= PIPELINE {
                let (k, h, s) = ring[at];
                self.maps[s].observe(k, h, doc);
            }
            ring[at] = (key, hash, shard);
            queued += 1;
        });
        for q in queued.saturating_sub(PIPELINE)..queued {
            let (k, h, s) = ring[q % PIPELINE];
            self.maps[s].observe(k, h, doc);
        }
    }
}

fn write_run<K: GramKey>(path: &Path, entries: &[(K, u32)]) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for (key, count) in entries {
        key.write_to(&mut w)?;
        w.write_all(&count.to_le_bytes())?;
    }
    w.flush()
}

fn read_run<K: GramKey>(path: &Path, n: usize, into: &mut FxHashMap<K, u64>) -> io::Result<()> {
    let mut r = BufReader::new(File::open(path)?);
    while let Some(key) = K::read_from(&mut r, n)? {
        let mut buf = [0u8; 4];
        r.read_exact(&mut buf)?;
        *into.entry(key).or_insert(0) += u32::from_le_bytes(buf) as u64;
    }
    Ok(())
}

enum SpillDir {
    Unset(Option<PathBuf>),
    Ready(TempDir),
}

impl SpillDir {
    fn path(&mut self) -> io::Result<PathBuf> {
        if let SpillDir::Unset(requested) = self {
            // own subdirectory, since counters that get merged share `requested`
            let dir = match requested.take() {
                Some(p) => {
                    if !p.is_dir() {
                        return Err(io::Error::new(
                            io::ErrorKind::NotFound,
                            format!("spill directory {} does not exist", p.display()),
                        ));
                    }
                    tempfile::Builder::new().prefix("gramsight-spill").tempdir_in(p)?
                }
                None => tempfile::tempdir()?,
            };
            *self = SpillDir::Ready(dir);
        }
        match self {
            SpillDir::Ready(t) => Ok(t.path().to_path_buf()),
            SpillDir::Unset(_) => unreachable!(),
        }
    }
}

enum Inner {
    Packed(Shards<u64>),
    Wide(Shards<Box<[u8]>>),
}

/// Streaming document-frequency counter. Feed documents one at a time with
/// [`DocFreqCounter::add`]; counters over disjoint document sets combine
/// with [`DocFreqCounter::merge`].
pub struct DocFreqCounter {
    n: usize,
    options: CountOptions,
    docs: u64,
    inner: Inner,
    spill: Vec<SpillDir>,
    run_seq: u64,
}

impl DocFreqCounter {
    pub fn new(n: usize, options: CountOptions) -> Result<Self> {
        if n == 0 {
            return Err(Error::arg("n-gram length must be at least 1"));
        }
        if options.shard_count == 0 {
            return Err(Error::arg("shard_count must be at least 1"));
        }
        let inner = if n <= PACKED_MAX {
            Inner::Packed(Shards::new(options.shard_count))
        } else {
            Inner::Wide(Shards::new(options.shard_count))
        };
        let spill = vec![SpillDir::Unset(options.spill_dir.clone())];
        Ok(DocFreqCounter {
            n,
            options,
            docs: 0,
            inner,
            spill,
            run_seq: 0,
        })
    }

    pub fn documents(&self) -> u64 {
        self.docs
    }

    pub fn add(&mut self, stream: &ByteStream) -> Result<()> {
        if self.docs >= NO_DOC as u64 {
            return Err(Error::arg("document counter overflow"));
        }
        let doc = self.docs as u32;
        let n = self.n;
        match &mut self.inner {
            Inner::Packed(shards) => shards.observe_stream(stream, n, doc),
            Inner::Wide(shards) => for_each_window(stream, n, |w| shards.observe(w.into(), doc)),
        }
        self.docs += 1;
        let budget = self.options.max_entries_per_shard;
        let dir = &mut self.spill[0];
        match &mut self.inner {
            Inner::Packed(s) => s.spill_over_budget(budget, dir, &mut self.run_seq),
            Inner::Wide(s) => s.spill_over_budget(budget, dir, &mut self.run_seq),
        }
    }

    /// Absorbs a counter that saw a disjoint set of documents.
    pub fn merge(&mut self, other: DocFreqCounter) -> Result<()> {
        if other.n != self.n || other.options.shard_count != self.options.shard_count {
            return Err(Error::arg("cannot merge counters with different n or shard count"));
        }
        self.docs += other.docs;
        match (&mut self.inner, other.inner) {
            (Inner::Packed(a), Inner::Packed(b)) => a.merge(b),
            (Inner::Wide(a), Inner::Wide(b)) => a.merge(b),
            _ => unreachable!("same n implies same key width"),
        }
        // Keeps the other counter's run files alive until we finish.
        self.spill.extend(other.spill);
        Ok(())
    }

    pub fn finish(self) -> Result<DocFreqTable> {
        self.finish_with_min_df(1)
    }

    /// Finishes counting, dropping n-grams seen in fewer than `min_df`
    /// documents shard by shard.
    pub fn finish_with_min_df(self, min_df: u64) -> Result<DocFreqTable> {
        let entries = match self.inner {
            Inner::Packed(s) => s.finish(self.n, min_df)?,
            Inner::Wide(s) => s.finish(self.n, min_df)?,
        };
        Ok(DocFreqTable {
            n: self.n,
            corpus_size: self.docs,
            entries,
        })
    }
}

pub fn count_document_frequency<I>(docs: I, n: usize, shard_count: usize) -> Result<DocFreqTable>
where
    I: IntoIterator,
    I::Item: Borrow<ByteStream>,
{
    count_with_options(docs, n, CountOptions::with_shards(shard_count))
}

pub fn count_with_options<I>(docs: I, n: usize, options: CountOptions) -> Result<DocFreqTable>
where
    I: IntoIterator,
    I::Item: Borrow<ByteStream>,
{
    let mut counter = DocFreqCounter::new(n, options)?;
    for doc in docs {
        counter.add(doc.borrow())?;
    }
    counter.finish()
}

/// Counts in parallel over chunks of documents and merges the partial
/// counters. The result is identical to the sequential count.
pub fn count_parallel(docs: &[ByteStream], n: usize, options: &CountOptions) -> Result<DocFreqTable> {
    let chunk = docs.len().div_ceil(rayon::current_num_threads().max(1) * 4).max(1);
    let partials: Vec<DocFreqCounter> = docs
        .par_chunks(chunk)
        .map(|part| {
            let mut c = DocFreqCounter::new(n, options.clone())?;
            for d in part {
                c.add(d)?;
            }
            Ok(c)
        })
        .collect::<Result<_>>()?;
    let mut total = DocFreqCounter::new(n, options.clone())?;
    for p in partials {
        total.merge(p)?;
    }
    total.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(bytes: &[u8]) -> ByteStream {
        ByteStream::contiguous("d", 0, bytes.to_vec())
    }

    #[test]
    fn three_document_example() {
        // A = [1,1], B = [2,2] as 2-grams.
        let docs = vec![doc(&[1, 1]), doc(&[1, 1, 9, 2, 2]), doc(&[2, 2])];
        let t = count_document_frequency(&docs, 2, 4).unwrap();
        assert_eq!(t.get(&NGram::new(vec![1, 1])), 2);
        assert_eq!(t.get(&NGram::new(vec![2, 2])), 2);
        assert_eq!(t.corpus_size, 3);
    }

    #[test]
    fn empty_corpus() {
        let t = count_document_frequency(Vec::<ByteStream>::new(), 6, 2).unwrap();
        assert!(t.is_empty());
        assert_eq!(t.corpus_size, 0);
    }

    #[test]
    fn repeated_gram_counts_once() {
        let d = doc(&[7; 15]);
        let t = count_document_frequency([&d], 6, 1).unwrap();
        assert_eq!(t.get(&NGram::new(vec![7; 6])), 1);
    }

    #[test]
    fn boundary_filter() {
        let mut t = DocFreqTable {
            n: 1,
            corpus_size: 200,
            entries: BTreeMap::new(),
        };
        t.entries.insert(NGram::new(vec![0xA]), 99);
        t.entries.insert(NGram::new(vec![0xB]), 100);
        assert_eq!(filter_by_frequency(&t, 100).unwrap(), vec![NGram::new(vec![0xB])]);
        assert_eq!(filter_by_frequency(&t, 1).unwrap().len(), 2);
        assert!(filter_by_frequency(&t, 0).is_err());
    }

    #[test]
    fn spilling_matches_in_memory() {
        let docs: Vec<ByteStream> = (0..30u8)
            .map(|i| {
                doc(&(0..200u32)
                    .map(|j| ((j * 7 + i as u32 * 13) % 23) as u8)
                    .collect::<Vec<_>>())
            })
            .collect();
        let plain = count_document_frequency(&docs, 3, 4).unwrap();
        let spilled = count_with_options(
            &docs,
            3,
            CountOptions {
                shard_count: 4,
                max_entries_per_shard: 5,
                spill_dir: None,
            },
        )
        .unwrap();
        assert_eq!(plain, spilled);
        let wide = count_with_options(
            &docs,
            10,
            CountOptions {
                shard_count: 3,
                max_entries_per_shard: 7,
                spill_dir: None,
            },
        )
        .unwrap();
        assert_eq!(wide, count_document_frequency(&docs, 10, 1).unwrap());
    }

    #[test]
    fn spill_failure_names_shard() {
        let docs = vec![doc(&[1, 2, 3, 4, 5, 6, 7, 8, 9])];
        let err = count_with_options(
            &docs,
            2,
            CountOptions {
                shard_count: 2,
                max_entries_per_shard: 0,
                spill_dir: Some(PathBuf::from("/nonexistent/gramsight-spill")),
            },
        )
        .unwrap_err();
        assert!(matches!(err, Error::Count { .. }), "{err}");
    }

    #[test]
    fn parallel_matches_sequential() {
        let docs: Vec<ByteStream> = (0..50u32)
            .map(|i| doc(&(0..100u32).map(|j| ((j * j + i) % 11) as u8).collect::<Vec<_>>()))
            .collect();
        let opts = CountOptions {
            shard_count: 4,
            max_entries_per_shard: 20,
            spill_dir: None,
        };
        assert_eq!(
            count_parallel(&docs, 4, &opts).unwrap(),
            count_document_frequency(&docs, 4, 4).unwrap()
        );
    }

    #[test]
    fn tsv_roundtrip() {
        let docs = vec![doc(&[1, 2, 3, 4, 5, 6, 7]), doc(&[2, 3, 4, 5, 6, 7, 8])];
        let t = count_document_frequency(&docs, 6, 2).unwrap();
        assert_eq!(DocFreqTable::from_tsv(&t.to_tsv()).unwrap(), t);
        assert!(t.to_tsv().contains("020304050607\t2"));
    }
}
