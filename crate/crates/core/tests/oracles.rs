//! Library results against brute-force references, beyond what the
//! acceptance run covers.

mod common;

use std::collections::BTreeMap;

use common::*;
use gramsight::corpus::ByteStream;
use gramsight::interpret::{gini_importances, lrp_relevances, RelevanceTarget};
use gramsight::models::{Classifier, Model, ModelKind};
use gramsight::ngram_index::{
    count_parallel, extract_ngrams, filter_by_frequency, CountOptions, DocFreqCounter, DocFreqTable,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn as_map(t: &DocFreqTable) -> BTreeMap<Vec<u8>, u64> {
    t.entries.iter().map(|(g, &c)| (g.as_bytes().to_vec(), c)).collect()
}

fn docs(seed: u64, count: usize) -> Vec<ByteStream> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|i| random_doc(&mut rng, i, 600, 4)).collect()
}

#[test]
fn parallel_and_merged_counts_match_naive() {
    let docs = docs(11, 150);
    for n in [1usize, 3, 8, 10] {
        let oracle = naive_df(&docs, n);
        let spill = tempfile::tempdir().unwrap();
        let options = CountOptions {
            shard_count: 4,
            max_entries_per_shard: 64,
            spill_dir: Some(spill.path().to_path_buf()),
        };
        assert_eq!(
            as_map(&count_parallel(&docs, n, &options).unwrap()),
            oracle,
            "parallel n={n}"
        );

        let (a, b) = docs.split_at(37);
        let mut left = DocFreqCounter::new(n, options.clone()).unwrap();
        let mut right = DocFreqCounter::new(n, CountOptions::with_shards(4)).unwrap();
        a.iter().for_each(|d| left.add(d).unwrap());
        b.iter().for_each(|d| right.add(d).unwrap());
        left.merge(right).unwrap();
        assert_eq!(left.documents(), docs.len() as u64);
        let table = left.finish().unwrap();
        assert_eq!(table.corpus_size, docs.len() as u64);
        assert_eq!(as_map(&table), oracle, "merged n={n}");
    }
}

#[test]
fn extracted_sets_and_filters_match_naive() {
    let docs = docs(12, 40);
    for d in &docs {
        let got: Vec<Vec<u8>> = extract_ngrams(d, 5)
            .into_iter()
            .map(|g| g.as_bytes().to_vec())
            .collect();
        let want: Vec<Vec<u8>> = naive_df(std::slice::from_ref(d), 5).into_keys().collect();
        assert_eq!(got, want);
    }
    let table = count_parallel(&docs, 4, &CountOptions::default()).unwrap();
    for min_df in [1, 2, 5, 20] {
        let kept: Vec<Vec<u8>> = filter_by_frequency(&table, min_df)
            .unwrap()
            .into_iter()
            .map(|g| g.as_bytes().to_vec())
            .collect();
        let want: Vec<Vec<u8>> = naive_df(&docs, 4)
            .into_iter()
            .filter(|&(_, c)| c >= min_df)
            .map(|(g, _)| g)
            .collect();
        assert_eq!(kept, want);
    }
    assert_eq!(DocFreqTable::from_tsv(&table.to_tsv()).unwrap(), table);
}

#[test]
fn forest_votes_are_tree_means_and_gini_sums_to_one() {
    let desk = Desk::new();
    let (model, vocab, matrix) = desk.model(ModelKind::Forest);
    let Model::Forest(forest) = &model else { unreachable!() };
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..40 {
        let row = matrix.row(rng.gen_range(0..matrix.n_samples()));
        let p = forest.probabilities_unchecked(row);
        for (k, &pk) in p.iter().enumerate() {
            let mean = (0..forest.trees.len())
                .map(|t| forest.tree_probabilities(t, row)[k])
                .sum::<f64>()
                / forest.trees.len() as f64;
            assert!((pk - mean).abs() < 1e-12);
        }
    }
    let gini = gini_importances(forest, &vocab).unwrap();
    let total: f64 = gini.entries.iter().map(|e| e.value).sum();
    assert!((total - 1.0).abs() < 1e-9, "importances sum to {total}");
}

#[test]
fn trained_mlp_relevance_is_conserved() {
    let desk = Desk::new();
    let (model, _, matrix) = desk.model(ModelKind::Mlp);
    let Model::Mlp(mlp) = &model else { unreachable!() };
    for i in (0..matrix.n_samples()).step_by(37) {
        for &class in &mlp.classes {
            let v = lrp_relevances(mlp, matrix.row(i), class).unwrap();
            assert_eq!(v.target, RelevanceTarget::Class(class));
            let sum: f64 = v.values.iter().sum();
            assert!(
                (sum - v.target_relevance).abs() <= 1e-6 * v.target_relevance.abs() + 1e-9,
                "sample {i} class {class}: {sum} vs {}",
                v.target_relevance
            );
        }
    }
}
