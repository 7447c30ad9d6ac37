//! Maps n-grams back to byte addresses and to padded listing snippets.
//!
//! Addresses returned by [`locate_ngram`] are byte offsets. A snippet also
//! records the address of the instruction whose bytes contain the first
//! matched byte, which is the address a listing reader searches for.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::corpus::{AsmLine, AsmListing, ByteRun, ByteStream};
use crate::error::{Error, Result};
use crate::interpret::RankedFeatures;
use crate::ngram_index::NGram;

/// Listing lines shown on each side of the matched lines.
pub const CONTEXT_LINES: usize = 3;

/// Every start address of `ngram` inside a single run, ascending.
/// Overlapping matches are all reported.
pub fn locate_ngram(stream: &ByteStream, ngram: &NGram) -> Vec<u32> {
    let needle = ngram.as_bytes();
    if needle.is_empty() {
        return Vec::new();
    }
    let mut out = Vec::new();
    for run in &stream.runs {
        if run.bytes.len() < needle.len() {
            continue;
        }
        for (i, w) in run.bytes.windows(needle.len()).enumerate() {
            if w == needle {
                out.push(run.start + i as u32);
            }
        }
    }
    out
}

/// Byte content of a listing's code lines. Adjacent lines join into one
/// run; a line that overlaps the previous one is dropped.
pub fn listing_byte_stream(listing: &AsmListing, sample_id: &str) -> Result<ByteStream> {
    let mut runs: Vec<ByteRun> = Vec::new();
    for line in listing.lines.iter().filter(|l| l.is_code()) {
        let addr = line.address.expect("code line");
        match runs.last_mut() {
            Some(run) if run.end() == addr as u64 => run.bytes.extend_from_slice(&line.bytes),
            Some(run) if run.end() > addr as u64 => {
                log::debug!("listing line at {addr:08X} overlaps the previous one; skipped");
            }
            _ => runs.push(ByteRun {
                start: addr,
                bytes: line.bytes.clone(),
            }),
        }
    }
    ByteStream::from_runs(sample_id, runs)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Highlight {
    /// Index into [`CodeSnippet::lines`].
    pub line: usize,
    /// Byte index span within that line, end exclusive.
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CodeSnippet {
    pub ngram: NGram,
    pub match_address: u32,
    pub instruction_address: u32,
    pub lines: Vec<AsmLine>,
    pub highlights: Vec<Highlight>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

impl CodeSnippet {
    /// Highlighted bytes in address order.
    pub fn highlighted_bytes(&self) -> Vec<u8> {
        self.highlights
            .iter()
            .flat_map(|h| self.lines[h.line].bytes[h.start..h.end].iter().copied())
            .collect()
    }

    pub fn leading_context(&self) -> usize {
        self.highlights.first().map_or(0, |h| h.line)
    }

    pub fn trailing_context(&self) -> usize {
        self.highlights.last().map_or(0, |h| self.lines.len() - 1 - h.line)
    }

    /// Text block with `@` markers around the matched bytes.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "; {} at {:08X} (instruction {:08X})",
            self.ngram, self.match_address, self.instruction_address
        );
        if let Some(w) = &self.warning {
            let _ = writeln!(s, "; warning: {w}");
        }
        for (i, line) in self.lines.iter().enumerate() {
            let Some(addr) = line.address else {
                let _ = writeln!(s, "{}", line.text);
                continue;
            };
            let mut cells: Vec<String> = line.bytes.iter().map(|b| format!("{b:02X}")).collect();
            if let Some(h) = self.highlights.iter().find(|h| h.line == i) {
                cells[h.start].insert(0, '@');
                cells[h.end - 1].push('@');
            }
            let _ = writeln!(s, "{}:{addr:08X} {:<20} {}", line.section, cells.join(" "), line.text);
        }
        s
    }
}

fn covering_line(listing: &AsmListing, address: u32) -> Option<usize> {
    listing.lines.iter().position(|l| {
        l.is_code() && {
            let start = l.address.expect("code line") as u64;
            start <= address as u64 && (address as u64) < l.end().expect("code line")
        }
    })
}

/// Snippet for `span` bytes starting at `address`: the covering lines
/// with up to [`CONTEXT_LINES`] of context on each side. Coverage extends
/// over following code lines while they stay contiguous; text-only lines in
/// between are kept without highlights.
pub fn map_address_to_snippet(listing: &AsmListing, address: u32, span: usize) -> Result<CodeSnippet> {
    let first = covering_line(listing, address)
        .ok_or_else(|| Error::NotFound(format!("address {address:08X} is not in the listing")))?;
    let mut ranges: Vec<(usize, usize, usize)> = Vec::new();
    let mut cursor = address as u64;
    let mut remaining = span;
    let mut idx = first;
    while remaining > 0 && idx < listing.lines.len() {
        let line = &listing.lines[idx];
        if !line.is_code() {
            idx += 1;
            continue;
        }
        let start = line.address.expect("code line") as u64;
        if start > cursor || line.end().expect("code line") <= cursor {
            break;
        }
        let from = (cursor - start) as usize;
        let to = (from + remaining).min(line.bytes.len());
        ranges.push((idx, from, to));
        remaining -= to - from;
        cursor += (to - from) as u64;
        idx += 1;
    }
    let last = ranges.last().expect("covering line").0;
    let lo = first.saturating_sub(CONTEXT_LINES);
    let hi = (last + CONTEXT_LINES).min(listing.lines.len() - 1);
    let lines: Vec<AsmLine> = listing.lines[lo..=hi].to_vec();
    let highlights: Vec<Highlight> = ranges
        .iter()
        .map(|&(i, start, end)| Highlight {
            line: i - lo,
            start,
            end,
        })
        .collect();
    let mut snippet = CodeSnippet {
        ngram: NGram::new(Vec::new()),
        match_address: address,
        instruction_address: listing.lines[first].address.expect("code line"),
        lines,
        highlights,
        warning: None,
    };
    snippet.ngram = NGram::new(snippet.highlighted_bytes());
    if remaining > 0 {
        snippet.warning = Some(format!("listing covers only {} of {span} bytes", span - remaining));
    }
    Ok(snippet)
}

/// Snippets for the top `top_k` features of `ranked` that occur in
/// `stream`, ordered by rank and then address. Matches the listing does not
/// cover are logged and skipped; listing bytes that disagree with the
/// stream are kept with a warning.
pub fn annotate_sample(
    stream: &ByteStream,
    listing: &AsmListing,
    ranked: &RankedFeatures,
    top_k: usize,
) -> Vec<CodeSnippet> {
    ranked
        .entries
        .par_iter()
        .take(top_k)
        .map(|entry| {
            locate_ngram(stream, &entry.ngram)
                .into_iter()
                .filter_map(|addr| match map_address_to_snippet(listing, addr, entry.ngram.len()) {
                    Ok(mut snippet) => {
                        if snippet.ngram != entry.ngram {
                            let seen = snippet.ngram.clone();
                            snippet.ngram = entry.ngram.clone();
                            snippet
                                .warning
                                .get_or_insert_with(|| format!("listing bytes {seen} differ from the sample bytes"));
                        }
                        Some(snippet)
                    }
                    Err(e) => {
                        log::warn!("{}: {} at {addr:08X}: {e}", stream.sample_id, entry.ngram);
                        None
                    }
                })
                .collect::<Vec<_>>()
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

pub fn render_snippets(snippets: &[CodeSnippet]) -> String {
    snippets.iter().map(CodeSnippet::render).collect::<Vec<_>>().join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::parse_asm_listing;
    use crate::interpret::RankingKind;
    use crate::ngram_index::FeatureVocabulary;

    const LISTING: &str = include_str!("../fixtures/call_site.asm");

    #[test]
    fn overlapping_matches() {
        let s = ByteStream::contiguous("x", 0x10, vec![0xAA; 3]);
        assert_eq!(locate_ngram(&s, &"AAAA".parse().unwrap()), vec![0x10, 0x11]);
        assert!(locate_ngram(&s, &"BB".parse().unwrap()).is_empty());
    }

    #[test]
    fn matches_stay_inside_runs() {
        let s = ByteStream::from_runs(
            "x",
            vec![
                ByteRun {
                    start: 0,
                    bytes: vec![1, 2],
                },
                ByteRun {
                    start: 3,
                    bytes: vec![3],
                },
            ],
        )
        .unwrap();
        assert!(locate_ngram(&s, &"0203".parse().unwrap()).is_empty());
    }

    #[test]
    fn appendix_snippet() {
        let listing = parse_asm_listing(LISTING);
        let stream = listing_byte_stream(&listing, "s").unwrap();
        assert_eq!(stream.runs.len(), 1);
        let g: NGram = "D0506A00E8B8".parse().unwrap();
        assert_eq!(locate_ngram(&stream, &g), vec![0x63598B]);
        let snip = map_address_to_snippet(&listing, 0x63598B, 6).unwrap();
        assert_eq!(snip.instruction_address, 0x63598A);
        assert_eq!(snip.highlighted_bytes(), g.as_bytes());
        assert_eq!((snip.leading_context(), snip.trailing_context()), (3, 3));
        assert_eq!(snip.lines.first().unwrap().text, "mov ebp, esp");
        assert!(snip.lines.iter().any(|l| l.text == "call loc_63574C"));
        assert!(snip.lines.iter().any(|l| l.text == "pop eax"));
        let text = snip.render();
        assert!(text.contains("13 @D0@"), "{text}");
        assert!(text.contains("@E8 B8@ FD FF FF"), "{text}");
    }

    #[test]
    fn boundaries() {
        let listing = parse_asm_listing(LISTING);
        let start = map_address_to_snippet(&listing, 0x63597F, 1).unwrap();
        assert_eq!(start.leading_context(), 0);
        assert_eq!(start.highlights.len(), 1);
        assert_eq!(start.lines.len(), 4);
        assert!(matches!(
            map_address_to_snippet(&listing, 0x100, 1),
            Err(Error::NotFound(_))
        ));
        let short = map_address_to_snippet(&listing, 0x635998, 4).unwrap();
        assert!(short.warning.is_some());
    }

    #[test]
    fn annotation_order_and_mismatch() {
        let listing = parse_asm_listing(LISTING);
        let mut stream = listing_byte_stream(&listing, "s").unwrap();
        let vocab = FeatureVocabulary::from_ngrams(1, vec!["50".parse().unwrap(), "C4".parse().unwrap()]).unwrap();
        let ranked = RankedFeatures::from_values(RankingKind::ClassWeight, None, &[1.0, 2.0], &vocab).unwrap();
        assert!(annotate_sample(&stream, &listing, &ranked, 0).is_empty());
        let snippets = annotate_sample(&stream, &listing, &ranked, 2);
        let addrs: Vec<u32> = snippets.iter().map(|s| s.match_address).collect();
        assert_eq!(addrs, vec![0x635995, 0x63598C, 0x635998]);
        assert!(snippets.iter().all(|s| s.warning.is_none()));

        stream.runs[0].bytes[0x635995 - 0x63597F] = 0x99;
        stream.runs[0].bytes[0x63598C - 0x63597F] = 0xC4;
        let snippets = annotate_sample(&stream, &listing, &ranked, 1);
        assert_eq!(snippets.len(), 1);
        assert!(snippets[0].warning.is_some());
    }
}
