use std::collections::BTreeMap;

use gramsight::corpus::{parse_hex_dump, stratified_partition_indices, ByteRun, ByteStream, ClassLabel};
use gramsight::interpret::{RankedFeatures, RankingKind};
use gramsight::ngram_index::{vectorize, BinaryFeatureMatrix, FeatureVocabulary, NGram};
use gramsight::robustness::ablate;
use proptest::prelude::*;

/// Runs separated by gaps of at least one byte, so parsing cannot merge them.
fn stream() -> impl Strategy<Value = ByteStream> {
    (
        0u32..1 << 20,
        prop::collection::vec((prop::collection::vec(any::<u8>(), 1..40), 1u32..40), 0..5),
    )
        .prop_map(|(mut start, parts)| {
            let mut runs = Vec::new();
            for (bytes, gap) in parts {
                let len = bytes.len() as u32;
                runs.push(ByteRun { start, bytes });
                start += len + gap;
            }
            ByteStream::from_runs("s", runs).unwrap()
        })
}

fn small_alphabet_stream() -> impl Strategy<Value = ByteStream> {
    prop::collection::vec((prop::collection::vec(0u8..3, 0..30), 1u32..5), 1..4).prop_map(|parts| {
        let mut start = 0;
        let runs = parts
            .into_iter()
            .map(|(bytes, gap)| {
                let r = ByteRun { start, bytes };
                start += r.bytes.len() as u32 + gap;
                r
            })
            .collect();
        ByteStream::from_runs("s", runs).unwrap()
    })
}

fn matrix() -> impl Strategy<Value = BinaryFeatureMatrix> {
    (1usize..12, 1usize..25).prop_flat_map(|(f, n)| {
        (
            prop::collection::vec(prop::collection::vec(0..f as u32, 0..f), n),
            prop::collection::vec(1u8..=4, n),
        )
            .prop_map(move |(rows, labels)| {
                let ids = (0..rows.len()).map(|i| format!("s{i}")).collect();
                BinaryFeatureMatrix::new(f, ids, labels, rows).unwrap()
            })
    })
}

proptest! {
    #[test]
    fn hex_dump_round_trips(s in stream(), per_line in 1usize..33) {
        let text = s.to_hex_dump(per_line);
        let back = parse_hex_dump(&text, "s").unwrap();
        prop_assert_eq!(&back, &s);
        prop_assert_eq!(back.to_hex_dump(per_line), text);
    }

    #[test]
    fn vectorize_matches_containment(s in small_alphabet_stream(), n in 1usize..11, picks in prop::collection::vec(prop::collection::vec(0u8..3, 10), 1..20)) {
        let grams: Vec<NGram> = picks.iter().map(|p| NGram::new(&p[..n])).collect();
        let mut unique = grams.clone();
        unique.sort();
        unique.dedup();
        let vocab = FeatureVocabulary::from_ngrams(n, unique).unwrap();
        let row = vectorize(&s, &vocab);
        for (j, g) in vocab.ngrams().iter().enumerate() {
            let present = s.runs.iter().any(|r| r.bytes.windows(n).any(|w| w == g.as_bytes()));
            prop_assert_eq!(row.contains(&(j as u32)), present, "column {}", j);
        }
        prop_assert!(row.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn stratified_parts_cover_and_balance(labels in prop::collection::vec(1u8..=9, 2..200), k in 2usize..8, seed: u64) {
        let parts = stratified_partition_indices(&labels, k, seed).unwrap();
        prop_assert_eq!(parts.len(), k);
        let mut all: Vec<usize> = parts.iter().flatten().copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..labels.len()).collect::<Vec<_>>());
        let sizes: Vec<usize> = parts.iter().map(Vec::len).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        let mut per_class: BTreeMap<ClassLabel, Vec<usize>> = BTreeMap::new();
        for p in &parts {
            let mut counts: BTreeMap<ClassLabel, usize> = BTreeMap::new();
            for &i in p {
                *counts.entry(labels[i]).or_default() += 1;
            }
            for &c in labels.iter() {
                per_class.entry(c).or_default();
            }
            for (c, v) in per_class.iter_mut() {
                v.push(counts.get(c).copied().unwrap_or(0));
            }
        }
        for v in per_class.values() {
            prop_assert!(v.iter().max().unwrap() - v.iter().min().unwrap() <= 1);
        }
        prop_assert_eq!(stratified_partition_indices(&labels, k, seed).unwrap(), parts);
    }

    #[test]
    fn ablation_counts_cells_and_is_idempotent(m in matrix(), cols in prop::collection::vec(0u32..12, 0..6)) {
        let cols: Vec<u32> = cols.into_iter().filter(|&c| (c as usize) < m.n_features()).collect();
        let expected: u64 = (0..m.n_samples())
            .map(|i| m.row(i).iter().filter(|c| cols.contains(c)).count() as u64)
            .sum();
        let (once, changed) = ablate(&m, &cols).unwrap();
        prop_assert_eq!(changed, expected);
        prop_assert_eq!(once.nnz() as u64, m.nnz() as u64 - expected);
        let (twice, again) = ablate(&once, &cols).unwrap();
        prop_assert_eq!(again, 0);
        prop_assert_eq!(twice, once);
    }

    #[test]
    fn rankings_are_sorted(values in prop::collection::vec(-5.0f64..5.0, 1..30)) {
        let grams: Vec<NGram> = (0..values.len() as u16).map(|i| NGram::new(i.to_be_bytes())).collect();
        let vocab = FeatureVocabulary::from_ngrams(2, grams).unwrap();
        let r = RankedFeatures::from_values(RankingKind::AvgAbsWeight, None, &values, &vocab).unwrap();
        prop_assert_eq!(r.len(), values.len());
        for w in r.entries.windows(2) {
            prop_assert!(w[0].value > w[1].value || (w[0].value == w[1].value && w[0].ngram < w[1].ngram));
        }
        for e in &r.entries {
            prop_assert_eq!(values[e.column as usize], e.value);
        }
    }

    #[test]
    fn vocab_and_matrix_text_round_trip(m in matrix(), n in 1usize..10) {
        let grams: Vec<NGram> = (0..m.n_features() as u8).map(|i| NGram::new(vec![i; n])).collect();
        let vocab = FeatureVocabulary::from_ngrams(n, grams).unwrap();
        prop_assert_eq!(FeatureVocabulary::from_tsv(&vocab.to_tsv()).unwrap(), vocab);
        prop_assert_eq!(BinaryFeatureMatrix::from_text(&m.to_text()).unwrap(), m);
    }
}
