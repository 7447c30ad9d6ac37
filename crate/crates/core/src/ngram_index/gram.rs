use std::borrow::Borrow;
use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::corpus::ByteStream;
use crate::error::{Error, Result};

/// Widest n-gram that fits the packed `u64` fast path.
pub(crate) const PACKED_MAX: usize = 8;

/// A fixed-length byte sequence. Displays as uppercase hex without
/// separators, e.g. `00008B5DE43B`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NGram(Vec<u8>);

impl NGram {
    pub fn new(bytes: impl Into<Vec<u8>>) -> Self {
        NGram(bytes.into())
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn to_hex(&self) -> String {
        self.to_string()
    }

    pub(crate) fn from_packed(key: u64, n: usize) -> Self {
        NGram((0..n).map(|i| (key >> (8 * (n - 1 - i))) as u8).collect())
    }
}

/// Packs up to eight bytes big-endian, so packed order equals byte order.
#[inline]
pub(crate) fn pack(window: &[u8]) -> u64 {
    window.iter().fold(0u64, |acc, &b| (acc << 8) | b as u64)
}

#[inline]
pub(crate) fn packed_mask(n: usize) -> u64 {
    if n >= 8 {
        u64::MAX
    } else {
        (1u64 << (8 * n)) - 1
    }
}

impl Borrow<[u8]> for NGram {
    fn borrow(&self) -> &[u8] {
        &self.0
    }
}

impl fmt::Display for NGram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.0 {
            write!(f, "{b:02X}")?;
        }
        Ok(())
    }
}

impl FromStr for NGram {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        if compact.is_empty() || !compact.len().is_multiple_of(2) {
            return Err(Error::arg(format!("`{s}` is not an even-length hex string")));
        }
        let bytes = (0..compact.len())
            .step_by(2)
            .map(|i| u8::from_str_radix(&compact[i..i + 2], 16))
            .collect::<std::result::Result<Vec<u8>, _>>()
            .map_err(|_| Error::arg(format!("`{s}` is not hex")))?;
        Ok(NGram(bytes))
    }
}

impl Serialize for NGram {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for NGram {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Calls `f` on every length-`n` window that lies inside a single run.
pub(crate) fn for_each_window<'a>(stream: &'a ByteStream, n: usize, mut f: impl FnMut(&'a [u8])) {
    if n == 0 {
        return;
    }
    for run in &stream.runs {
        if run.bytes.len() >= n {
            run.bytes.windows(n).for_each(&mut f);
        }
    }
}

/// Calls `f` with the packed key of every window; `n` must be at most 8.
#[inline]
pub(crate) fn for_each_packed(stream: &ByteStream, n: usize, mut f: impl FnMut(u64)) {
    debug_assert!((1..=PACKED_MAX).contains(&n));
    let mask = packed_mask(n);
    for run in &stream.runs {
        if run.bytes.len() < n {
            continue;
        }
        let mut key = pack(&run.bytes[..n - 1]);
        for &b in &run.bytes[n - 1..] {
            key = ((key << 8) | b as u64) & mask;
            f(key);
        }
    }
}

/// The distinct n-grams of a stream. Windows never cross a gap between
/// runs; `n == 0` yields nothing.
pub fn extract_ngrams(stream: &ByteStream, n: usize) -> BTreeSet<NGram> {
    let mut out = BTreeSet::new();
    for_each_window(stream, n, |w| {
        if !out.contains(w) {
            out.insert(NGram::new(w));
        }
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::ByteRun;

    #[test]
    fn appendix_six_gram() {
        let s = ByteStream::contiguous("s", 0, vec![0xD0, 0x50, 0x6A, 0x00, 0xE8, 0xB8]);
        let grams = extract_ngrams(&s, 6);
        assert_eq!(grams.len(), 1);
        assert_eq!(grams.iter().next().unwrap().to_hex(), "D0506A00E8B8");
    }

    #[test]
    fn short_run_yields_nothing() {
        let s = ByteStream::contiguous("s", 0, vec![1, 2, 3, 4, 5]);
        assert!(extract_ngrams(&s, 6).is_empty());
        assert!(extract_ngrams(&s, 0).is_empty());
    }

    #[test]
    fn windows_do_not_cross_gaps() {
        let s = ByteStream::from_runs(
            "s",
            vec![
                ByteRun {
                    start: 0,
                    bytes: vec![1, 2, 3],
                },
                ByteRun {
                    start: 4,
                    bytes: vec![4, 5, 6],
                },
            ],
        )
        .unwrap();
        assert!(extract_ngrams(&s, 4).is_empty());
        assert_eq!(extract_ngrams(&s, 3).len(), 2);
    }

    #[test]
    fn hex_roundtrip_and_packing() {
        let g: NGram = "00008b5de43b".parse().unwrap();
        assert_eq!(g.to_string(), "00008B5DE43B");
        assert_eq!(NGram::from_packed(pack(g.as_bytes()), 6), g);
        assert!("ABC".parse::<NGram>().is_err());
        assert!("ZZ".parse::<NGram>().is_err());
    }

    #[test]
    fn packed_windows_match_slices() {
        let s = ByteStream::contiguous("s", 0, (0u8..40).map(|i| i.wrapping_mul(37)).collect());
        for n in 1..=8 {
            let mut packed = Vec::new();
            for_each_packed(&s, n, |k| packed.push(k));
            let mut sliced = Vec::new();
            for_each_window(&s, n, |w| sliced.push(pack(w)));
            assert_eq!(packed, sliced, "n={n}");
        }
    }
}
