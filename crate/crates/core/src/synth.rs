//! Synthetic labeled corpus with planted discriminative n-grams.
//!
//! Every class owns a few marker n-grams that occur only in that class.
//! On top of that each class carries a distinct weight-3 codeword over six
//! code bits; a bit that is set plants a handful of shared n-grams, so each
//! code n-gram occurs in four or five classes. Markers are what a Chi²
//! selection favours, while code n-grams split the classes roughly in half
//! and carry high mutual information. The rest of each sample is filler
//! drawn from a common pool of byte idioms plus short random literals, with
//! unreadable gaps between segments.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{kaggle_class_names, ByteRun, ByteStream, ClassLabel, LabeledCorpus};
use crate::error::{Error, Result};
use crate::ngram_index::NGram;

/// Codewords per class; column weights are 5,5,5,4,4,4.
const CODEWORDS: [[usize; 3]; 9] = [
    [0, 1, 2],
    [0, 1, 3],
    [0, 2, 4],
    [0, 3, 5],
    [0, 4, 5],
    [1, 2, 5],
    [1, 3, 4],
    [1, 2, 4],
    [2, 3, 5],
];
pub const CODE_BITS: usize = 6;

const MNEMONICS: [&str; 16] = [
    "mov", "push", "pop", "add", "sub", "lea", "call", "jmp", "cmp", "test", "xor", "and", "or", "jz", "jnz", "ret",
];
const REGISTERS: [&str; 8] = ["eax", "ecx", "edx", "ebx", "esp", "ebp", "esi", "edi"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    /// At most nine.
    pub classes: u8,
    pub samples_per_class: usize,
    pub n: usize,
    pub markers_per_class: usize,
    pub grams_per_code_bit: usize,
    /// Chance that a sample carries each of its own planted n-grams.
    pub presence: f64,
    /// Chance that a sample carries a planted n-gram of another class.
    pub noise: f64,
    pub min_bytes: usize,
    pub max_bytes: usize,
    pub segments: usize,
    pub idioms: usize,
    /// Chance of a short random literal after each idiom.
    pub literal_rate: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            classes: 9,
            samples_per_class: 60,
            n: 6,
            markers_per_class: 3,
            grams_per_code_bit: 3,
            presence: 0.97,
            noise: 0.02,
            min_bytes: 3000,
            max_bytes: 9000,
            segments: 4,
            idioms: 256,
            literal_rate: 0.3,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(2..=9).contains(&self.classes) {
            out.push("classes".into());
        }
        if self.samples_per_class == 0 {
            out.push("samples_per_class".into());
        }
        if self.n == 0 {
            out.push("n".into());
        }
        if !(0.0..=1.0).contains(&self.presence) {
            out.push("presence".into());
        }
        if !(0.0..=1.0).contains(&self.noise) {
            out.push("noise".into());
        }
        if self.min_bytes == 0 || self.max_bytes < self.min_bytes {
            out.push("min_bytes/max_bytes".into());
        }
        if self.segments == 0 {
            out.push("segments".into());
        }
        if self.idioms == 0 {
            out.push("idioms".into());
        }
        if !(0.0..=1.0).contains(&self.literal_rate) {
            out.push("literal_rate".into());
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlantedKind {
    Marker,
    CodeBit(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedGram {
    pub ngram: NGram,
    pub kind: PlantedKind,
    /// Classes whose samples carry this n-gram.
    pub classes: Vec<ClassLabel>,
}

#[derive(Debug, Clone)]
pub struct SynthSample {
    pub id: String,
    pub label: ClassLabel,
    pub stream: ByteStream,
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub config: SynthConfig,
    pub samples: Vec<SynthSample>,
    pub planted: Vec<PlantedGram>,
}

impl SynthCorpus {
    pub fn labeled(&self) -> Result<LabeledCorpus> {
        let mut c = LabeledCorpus::new(self.samples.iter().map(|s| (s.id.clone(), s.label)).collect())?;
        c.class_names = kaggle_class_names()
            .into_iter()
            .filter(|(k, _)| *k <= self.config.classes)
            .collect();
        Ok(c)
    }

    pub fn planted_set(&self) -> BTreeSet<NGram> {
        self.planted.iter().map(|p| p.ngram.clone()).collect()
    }

    /// Planted n-grams carried by `class`.
    pub fn planted_for(&self, class: ClassLabel) -> Vec<&PlantedGram> {
        self.planted.iter().filter(|p| p.classes.contains(&class)).collect()
    }

    pub fn total_bytes(&self) -> usize {
        self.samples.iter().map(|s| s.stream.total_bytes()).sum()
    }
}

pub fn planted_to_tsv(planted: &[PlantedGram]) -> String {
    let mut s = String::from("#planted\n");
    for p in planted {
        let kind = match p.kind {
            PlantedKind::Marker => "marker".to_string(),
            PlantedKind::CodeBit(b) => format!("code{b}"),
        };
        let classes: Vec<String> = p.classes.iter().map(|c| c.to_string()).collect();
        let _ = writeln!(s, "{}\t{kind}\t{}", p.ngram, classes.join(","));
    }
    s
}

pub fn planted_from_tsv(text: &str) -> Result<Vec<PlantedGram>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = || Error::parse(i + 1, "expected HEXGRAM<TAB>kind<TAB>classes");
        let mut parts = line.split('\t');
        let ngram: NGram = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let kind = match parts.next().ok_or_else(bad)? {
            "marker" => PlantedKind::Marker,
            k => PlantedKind::CodeBit(k.strip_prefix("code").and_then(|b| b.parse().ok()).ok_or_else(bad)?),
        };
        let classes = parts
            .next()
            .ok_or_else(bad)?
            .split(',')
            .map(|c| c.parse().map_err(|_| bad()))
            .collect::<Result<Vec<ClassLabel>>>()?;
        out.push(PlantedGram { ngram, kind, classes });
    }
    Ok(out)
}

fn random_gram(rng: &mut ChaCha8Rng, n: usize, taken: &mut BTreeSet<Vec<u8>>) -> Vec<u8> {
    loop {
        let g: Vec<u8> = (0..n).map(|_| rng.gen()).collect();
        if taken.insert(g.clone()) {
            return g;
        }
    }
}

fn sample_id(rng: &mut ChaCha8Rng) -> String {
    const ALPHABET: &[u8] = b"0123456789ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz";
    (0..20)
        .map(|_| ALPHABET[rng.gen_range(0..ALPHABET.len())] as char)
        .collect()
}

/// Builds the corpus. Deterministic given the config.
pub fn generate(config: &SynthConfig) -> Result<SynthCorpus> {
    let problems = config.problems();
    if !problems.is_empty() {
        return Err(Error::Config { fields: problems });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut taken = BTreeSet::new();

    let mut planted = Vec::new();
    for class in 1..=config.classes {
        for _ in 0..config.markers_per_class {
            planted.push(PlantedGram {
                ngram: NGram::new(random_gram(&mut rng, config.n, &mut taken)),
                kind: PlantedKind::Marker,
                classes: vec![class],
            });
        }
    }
    for bit in 0..CODE_BITS {
        let classes: Vec<ClassLabel> = (1..=config.classes)
            .filter(|&c| CODEWORDS[c as usize - 1].contains(&bit))
            .collect();
        if classes.is_empty() {
            continue;
        }
        for _ in 0..config.grams_per_code_bit {
            planted.push(PlantedGram {
                ngram: NGram::new(random_gram(&mut rng, config.n, &mut taken)),
                kind: PlantedKind::CodeBit(bit),
                classes: classes.clone(),
            });
        }
    }

    let idioms: Vec<Vec<u8>> = (0..config.idioms)
        .map(|_| {
            let len = rng.gen_range(config.n.max(6)..=config.n.max(6) + 14);
            (0..len).map(|_| rng.gen()).collect()
        })
        .collect();
    let idiom_pick =
        WeightedIndex::new((0..config.idioms).map(|r| 1.0 / (r as f64 + 1.0).powf(0.8))).expect("positive weights");

    let mut ids = BTreeSet::new();
    let mut samples = Vec::new();
    for class in 1..=config.classes {
        for _ in 0..config.samples_per_class {
            let mut id = sample_id(&mut rng);
            while !ids.insert(id.clone()) {
                id = sample_id(&mut rng);
            }
            let mut inserts: Vec<&[u8]> = Vec::new();
            for p in &planted {
                let rate = if p.classes.contains(&class) {
                    config.presence
                } else {
                    config.noise
                };
                if rng.gen_bool(rate) {
                    inserts.push(p.ngram.as_bytes());
                    if rng.gen_bool(0.5) {
                        inserts.push(p.ngram.as_bytes());
                    }
                }
            }
            inserts.shuffle(&mut rng);
            let target = rng.gen_range(config.min_bytes..=config.max_bytes);
            let stream = build_stream(&mut rng, config, &id, target, &inserts, &idioms, &idiom_pick)?;
            samples.push(SynthSample {
                id,
                label: class,
                stream,
            });
        }
    }
    // interleave classes so file order carries no label information
    samples.shuffle(&mut rng);
    Ok(SynthCorpus {
        config: config.clone(),
        samples,
        planted,
    })
}

fn build_stream(
    rng: &mut ChaCha8Rng,
    config: &SynthConfig,
    id: &str,
    target: usize,
    inserts: &[&[u8]],
    idioms: &[Vec<u8>],
    idiom_pick: &WeightedIndex<f64>,
) -> Result<ByteStream> {
    let mut body = Vec::with_capacity(target + 64);
    // planted grams go at chunk boundaries, each followed by an idiom
    let mut slots: Vec<usize> = (0..inserts.len()).map(|_| rng.gen_range(0..target.max(1))).collect();
    slots.sort_unstable();
    let mut next = 0;
    let mut boundaries = Vec::new();
    while body.len() < target || next < inserts.len() {
        if next < inserts.len() && body.len() >= slots[next] {
            body.extend_from_slice(inserts[next]);
            next += 1;
        }
        body.extend_from_slice(&idioms[idiom_pick.sample(rng)]);
        if rng.gen_bool(config.literal_rate) {
            let len = rng.gen_range(1..=4);
            body.extend((0..len).map(|_| rng.gen::<u8>()));
        }
        boundaries.push(body.len());
    }
    // segments end at chunk boundaries so no planted gram is cut by a gap
    boundaries.pop();
    let mut cuts: Vec<usize> = if boundaries.is_empty() {
        Vec::new()
    } else {
        (1..config.segments)
            .map(|_| boundaries[rng.gen_range(0..boundaries.len())])
            .collect()
    };
    cuts.sort_unstable();
    cuts.dedup();
    let mut runs = Vec::new();
    let mut address: u32 = 0x0040_1000;
    let mut prev = 0;
    for cut in cuts.into_iter().chain(std::iter::once(body.len())) {
        runs.push(ByteRun {
            start: address,
            bytes: body[prev..cut].to_vec(),
        });
        address += (cut - prev) as u32 + rng.gen_range(16..=96);
        prev = cut;
    }
    ByteStream::from_runs(id, runs)
}

/// A disassembly-style listing of `stream`: pseudo instructions of one to
/// six bytes, each with a plausible mnemonic.
pub fn render_listing(stream: &ByteStream, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = String::new();
    for run in &stream.runs {
        let mut i = 0;
        while i < run.bytes.len() {
            let len = rng.gen_range(1..=6).min(run.bytes.len() - i);
            let bytes = &run.bytes[i..i + len];
            let hex: Vec<String> = bytes.iter().map(|b| format!("{b:02X}")).collect();
            let mnemonic = MNEMONICS[(bytes[0] & 0x0F) as usize];
            let reg = REGISTERS[(bytes[0] >> 5) as usize];
            let operands = match mnemonic {
                "ret" => String::new(),
                "call" | "jmp" | "jz" | "jnz" => {
                    format!("loc_{:X}", run.start as usize + i + len + bytes[len - 1] as usize)
                }
                _ if len > 1 => format!("{reg}, {:X}h", bytes[len - 1]),
                _ => reg.to_string(),
            };
            let _ = writeln!(
                s,
                ".text:{:08X} {:<20} {:<7} {}",
                run.start as usize + i,
                hex.join(" "),
                mnemonic,
                operands
            );
            i += len;
        }
    }
    s
}

/// Writes `samples/<id>.bytes`, `samples/<id>.asm`, `trainLabels.csv` and
/// `planted.tsv` under `dir`.
pub fn write_corpus(corpus: &SynthCorpus, dir: &Path) -> Result<()> {
    let samples_dir = dir.join("samples");
    fs::create_dir_all(&samples_dir).map_err(|e| Error::io(&samples_dir, e))?;
    for (i, sample) in corpus.samples.iter().enumerate() {
        let bytes_path = samples_dir.join(format!("{}.bytes", sample.id));
        fs::write(&bytes_path, sample.stream.to_hex_dump(16)).map_err(|e| Error::io(&bytes_path, e))?;
        let asm_path = samples_dir.join(format!("{}.asm", sample.id));
        let listing = render_listing(
            &sample.stream,
            corpus.config.seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
        );
        fs::write(&asm_path, listing).map_err(|e| Error::io(&asm_path, e))?;
    }
    let manifest = dir.join("trainLabels.csv");
    fs::write(&manifest, corpus.labeled()?.to_manifest()).map_err(|e| Error::io(&manifest, e))?;
    let planted = dir.join("planted.tsv");
    fs::write(&planted, planted_to_tsv(&corpus.planted)).map_err(|e| Error::io(&planted, e))?;
    Ok(())
}

/// Count of samples per class.
pub fn class_counts(corpus: &SynthCorpus) -> BTreeMap<ClassLabel, usize> {
    let mut out = BTreeMap::new();
    for s in &corpus.samples {
        *out.entry(s.label).or_insert(0) += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{parse_asm_listing, parse_hex_dump};
    use crate::ngram_index::extract_ngrams;

    fn small() -> SynthConfig {
        SynthConfig {
            samples_per_class: 4,
            min_bytes: 400,
            max_bytes: 800,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn codewords_are_distinct_and_balanced() {
        let set: BTreeSet<_> = CODEWORDS.iter().collect();
        assert_eq!(set.len(), 9);
        let mut weights = [0; CODE_BITS];
        for w in CODEWORDS {
            for b in w {
                weights[b] += 1;
            }
        }
        assert!(weights.iter().all(|&w| w == 4 || w == 5));
    }

    #[test]
    fn deterministic_and_labeled() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a.samples.len(), 36);
        assert_eq!(a.planted, b.planted);
        assert!(a
            .samples
            .iter()
            .zip(&b.samples)
            .all(|(x, y)| x.id == y.id && x.stream == y.stream));
        assert!(class_counts(&a).values().all(|&c| c == 4));
        assert_eq!(a.planted.len(), 9 * 3 + 6 * 3);
    }

    #[test]
    fn planted_grams_reach_their_class() {
        let cfg = SynthConfig {
            presence: 1.0,
            noise: 0.0,
            ..small()
        };
        let c = generate(&cfg).unwrap();
        for s in &c.samples {
            let grams = extract_ngrams(&s.stream, 6);
            for p in &c.planted {
                assert_eq!(grams.contains(&p.ngram), p.classes.contains(&s.label));
            }
        }
    }

    #[test]
    fn files_parse_back() {
        let c = generate(&small()).unwrap();
        let s = &c.samples[0];
        let dump = s.stream.to_hex_dump(16);
        assert_eq!(parse_hex_dump(&dump, &s.id).unwrap(), s.stream);
        let listing = parse_asm_listing(&render_listing(&s.stream, 1));
        assert_eq!(listing.skipped_count(), 0);
        let back = crate::codemap::listing_byte_stream(&listing, &s.id).unwrap();
        assert_eq!(back, s.stream);
        let planted = planted_from_tsv(&planted_to_tsv(&c.planted)).unwrap();
        assert_eq!(planted, c.planted);
    }
}
