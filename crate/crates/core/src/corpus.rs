//! Sample inputs: hex dumps, disassembly listings, labeled manifests and
//! stratified splits.
//!
//! Hex dumps follow the `.bytes` layout: an address column followed by
//! two-digit hex byte tokens, with `??` standing in for unreadable bytes.
//! A `??` or an address jump ends the current [`ByteRun`]; bytes are never
//! imputed across a gap.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type ClassLabel = u8;

/// A maximal stretch of readable bytes at consecutive addresses.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ByteRun {
    pub start: u32,
    pub bytes: Vec<u8>,
}

impl ByteRun {
    /// One past the last address covered by this run.
    pub fn end(&self) -> u64 {
        self.start as u64 + self.bytes.len() as u64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ByteStream {
    pub sample_id: String,
    pub runs: Vec<ByteRun>,
}

impl ByteStream {
    /// Builds a stream from runs, sorting by address and rejecting overlaps.
    pub fn from_runs(sample_id: impl Into<String>, mut runs: Vec<ByteRun>) -> Result<Self> {
        runs.retain(|r| !r.bytes.is_empty());
        runs.sort_by_key(|r| r.start);
        for pair in runs.windows(2) {
            if pair[0].end() > pair[1].start as u64 {
                return Err(Error::arg(format!(
                    "runs at {:08X} and {:08X} overlap",
                    pair[0].start, pair[1].start
                )));
            }
        }
        Ok(ByteStream {
            sample_id: sample_id.into(),
            runs,
        })
    }

    /// A single run starting at `start`.
    pub fn contiguous(sample_id: impl Into<String>, start: u32, bytes: Vec<u8>) -> Self {
        let runs = if bytes.is_empty() {
            Vec::new()
        } else {
            vec![ByteRun { start, bytes }]
        };
        ByteStream {
            sample_id: sample_id.into(),
            runs,
        }
    }

    pub fn total_bytes(&self) -> usize {
        self.runs.iter().map(|r| r.bytes.len()).sum()
    }

    /// Renders the stream in hex-dump form, `per_line` bytes per line.
    ///
    /// Lines are aligned to `per_line` boundaries and gaps inside a line are
    /// written as `??`, the way dump tools lay out partially readable pages.
    /// Parsing the output reproduces `self` exactly.
    pub fn to_hex_dump(&self, per_line: usize) -> String {
        let per_line = per_line.max(1) as u64;
        let mut out = String::new();
        let mut line_start: Option<u64> = None;
        let mut cursor = 0u64;
        for run in &self.runs {
            for (offset, byte) in run.bytes.iter().enumerate() {
                let addr = run.start as u64 + offset as u64;
                let aligned = addr - addr % per_line;
                match line_start {
                    Some(start) if start == aligned => {
                        for _ in cursor..addr {
                            out.push_str(" ??");
                        }
                    }
                    _ => {
                        if line_start.is_some() {
                            out.push('\n');
                        }
                        let _ = write!(out, "{:08X}", addr);
                        line_start = Some(aligned);
                    }
                }
                let _ = write!(out, " {:02X}", byte);
                cursor = addr + 1;
            }
        }
        if line_start.is_some() {
            out.push('\n');
        }
        out
    }
}

fn parse_hex_byte(token: &str) -> Option<u8> {
    if token.len() != 2 || !token.bytes().all(|b| b.is_ascii_hexdigit()) {
        return None;
    }
    u8::from_str_radix(token, 16).ok()
}

fn parse_address(token: &str) -> Option<u32> {
    if token.is_empty() || token.len() > 8 || !token.bytes().all(|b| b.is_ascii_hexdigit()) {
        return None;
    }
    u32::from_str_radix(token, 16).ok()
}

/// Parses a `.bytes`-style hex dump.
pub fn parse_hex_dump(text: &str, sample_id: &str) -> Result<ByteStream> {
    let mut runs: Vec<ByteRun> = Vec::new();
    let mut current: Option<ByteRun> = None;
    // Address expected for the next token; None before the first line.
    let mut cursor: Option<u64> = None;

    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let mut tokens = line.split_whitespace();
        let Some(addr_tok) = tokens.next() else {
            continue;
        };
        let addr =
            parse_address(addr_tok).ok_or_else(|| Error::parse(line_no, format!("bad address `{addr_tok}`")))? as u64;
        if let Some(expected) = cursor {
            if addr < expected {
                return Err(Error::parse(
                    line_no,
                    format!("address {addr:08X} is below the previous line's end {expected:08X}"),
                ));
            }
            if addr > expected {
                runs.extend(current.take());
            }
        }
        let mut pos = addr;
        for tok in tokens {
            if tok == "??" {
                runs.extend(current.take());
            } else {
                let byte =
                    parse_hex_byte(tok).ok_or_else(|| Error::parse(line_no, format!("bad hex token `{tok}`")))?;
                if pos > u32::MAX as u64 {
                    return Err(Error::parse(line_no, "address overflows 32 bits"));
                }
                current
                    .get_or_insert_with(|| ByteRun {
                        start: pos as u32,
                        bytes: Vec::new(),
                    })
                    .bytes
                    .push(byte);
            }
            pos += 1;
        }
        cursor = Some(pos);
    }
    runs.extend(current.take());
    Ok(ByteStream {
        sample_id: sample_id.to_string(),
        runs,
    })
}

/// Family names of the nine classes in the Microsoft malware dataset.
pub fn kaggle_class_names() -> BTreeMap<ClassLabel, String> {
    [
        (1, "Ramnit"),
        (2, "Lollipop"),
        (3, "Kelihos_ver3"),
        (4, "Vundo"),
        (5, "Simda"),
        (6, "Tracur"),
        (7, "Kelihos_ver1"),
        (8, "Obfuscator.ACY"),
        (9, "Gatak"),
    ]
    .into_iter()
    .map(|(k, v)| (k, v.to_string()))
    .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LabeledCorpus {
    pub samples: Vec<(String, ClassLabel)>,
    pub class_names: BTreeMap<ClassLabel, String>,
}

impl LabeledCorpus {
    pub fn new(samples: Vec<(String, ClassLabel)>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for (id, _) in &samples {
            if !seen.insert(id.as_str()) {
                return Err(Error::arg(format!("duplicate sample id `{id}`")));
            }
        }
        Ok(LabeledCorpus {
            samples,
            class_names: BTreeMap::new(),
        })
    }

    pub fn labels(&self) -> Vec<ClassLabel> {
        self.samples.iter().map(|(_, c)| *c).collect()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Reads an `Id,Class` manifest.
    pub fn from_manifest(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = reader.headers().map_err(|e| Error::parse(1, e.to_string()))?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h.eq_ignore_ascii_case(name))
                .ok_or_else(|| Error::parse(1, format!("manifest header lacks `{name}`")))
        };
        let (id_col, class_col) = (col("Id")?, col("Class")?);
        let mut samples = Vec::new();
        for (idx, record) in reader.records().enumerate() {
            let line = idx + 2;
            let record = record.map_err(|e| Error::parse(line, e.to_string()))?;
            let id = record.get(id_col).unwrap_or_default().to_string();
            let class: ClassLabel = record
                .get(class_col)
                .unwrap_or_default()
                .parse()
                .map_err(|_| Error::parse(line, "class is not an integer in 0..=255"))?;
            if id.is_empty() {
                return Err(Error::parse(line, "empty sample id"));
            }
            samples.push((id, class));
        }
        LabeledCorpus::new(samples)
    }

    pub fn to_manifest(&self) -> String {
        let mut out = String::from("Id,Class\n");
        for (id, class) in &self.samples {
            let _ = writeln!(out, "{id},{class}");
        }
        out
    }
}

/// Splits sample indices into `k` parts with per-class counts differing by
/// at most one between parts.
///
/// Each class's members are shuffled with the seed; leftover members after
/// even division are dealt round-robin, continuing the rotation from one
/// class to the next so part sizes stay balanced too.
pub fn stratified_partition_indices(labels: &[ClassLabel], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::arg(format!("partition needs k >= 2, got {k}")));
    }
    let mut by_class: BTreeMap<ClassLabel, Vec<usize>> = BTreeMap::new();
    for (i, &c) in labels.iter().enumerate() {
        by_class.entry(c).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut parts = vec![Vec::new(); k];
    let mut next = 0usize;
    for members in by_class.values_mut() {
        members.shuffle(&mut rng);
        for &i in members.iter() {
            parts[next % k].push(i);
            next += 1;
        }
    }
    Ok(parts)
}

/// Sample-id form of [`stratified_partition_indices`].
pub fn stratified_partition(corpus: &LabeledCorpus, k: usize, seed: u64) -> Result<Vec<Vec<String>>> {
    let parts = stratified_partition_indices(&corpus.labels(), k, seed)?;
    Ok(parts
        .into_iter()
        .map(|p| p.into_iter().map(|i| corpus.samples[i].0.clone()).collect())
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AsmLine {
    pub section: String,
    /// `None` for lines that did not match the `section:ADDRESS` layout.
    pub address: Option<u32>,
    pub bytes: Vec<u8>,
    pub text: String,
}

impl AsmLine {
    pub fn is_code(&self) -> bool {
        self.address.is_some() && !self.bytes.is_empty()
    }

    /// One past the last byte address of this line.
    pub fn end(&self) -> Option<u64> {
        self.address.map(|a| a as u64 + self.bytes.len() as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AsmListing {
    pub lines: Vec<AsmLine>,
}

impl AsmListing {
    pub fn parsed_count(&self) -> usize {
        self.lines.iter().filter(|l| l.address.is_some()).count()
    }

    pub fn skipped_count(&self) -> usize {
        self.lines.len() - self.parsed_count()
    }
}

/// Byte tokens in listings are two uppercase hex digits; the lowercase
/// mnemonic column (`db`, `add`) never matches.
fn parse_listing_byte(token: &str) -> Option<u8> {
    if token.len() == 2 && token.bytes().all(|b| b.is_ascii_digit() || (b'A'..=b'F').contains(&b)) {
        u8::from_str_radix(token, 16).ok()
    } else {
        None
    }
}

fn parse_listing_line(line: &str) -> Option<AsmLine> {
    let mut tokens = line.split_whitespace();
    let head = tokens.next()?;
    let (section, addr) = head.rsplit_once(':')?;
    if section.is_empty() {
        return None;
    }
    let address = parse_address(addr)?;
    let mut bytes = Vec::new();
    let mut text_tokens = Vec::new();
    for tok in tokens {
        if text_tokens.is_empty() {
            if let Some(b) = parse_listing_byte(tok) {
                bytes.push(b);
                continue;
            }
        }
        text_tokens.push(tok);
    }
    Some(AsmLine {
        section: section.to_string(),
        address: Some(address),
        bytes,
        text: text_tokens.join(" "),
    })
}

/// Parses a disassembly listing. Never fails: lines without a
/// `section:ADDRESS` prefix are kept as text-only entries.
pub fn parse_asm_listing(text: &str) -> AsmListing {
    let lines: Vec<AsmLine> = text
        .lines()
        .map(|line| {
            parse_listing_line(line).unwrap_or_else(|| AsmLine {
                section: String::new(),
                address: None,
                bytes: Vec::new(),
                text: line.trim().to_string(),
            })
        })
        .collect();
    let listing = AsmListing { lines };
    if listing.skipped_count() > 0 {
        log::debug!(
            "listing: {} lines parsed, {} kept as text only",
            listing.parsed_count(),
            listing.skipped_count()
        );
    }
    listing
}
