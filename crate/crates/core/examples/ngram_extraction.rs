//! Parse hex dumps, count document frequencies and build a binary
//! feature matrix.
//!
//! cargo run --release --example ngram_extraction

use gramsight::corpus::{parse_hex_dump, ByteStream};
use gramsight::ngram_index::{
    count_document_frequency, extract_ngrams, filter_by_frequency, vectorize_all, FeatureVocabulary,
};

const DUMPS: [(&str, &str); 3] = [
    (
        "sample-a",
        "00401000 55 8B EC 83 EC 28 53 56 57 8B 7D 08 85 FF 74 20\n\
         00401010 8B 45 0C ?? ?? 8B 5D E4 3B C3 74 11 5F 5E 5B C9\n",
    ),
    ("sample-b", "00401000 55 8B EC 83 EC 28 53 56 33 C0 40 5E 5B C9 C3 CC\n"),
    ("sample-c", "00401000 00 00 8B 5D E4 3B C3 74 11 90 90 90 90 90 90 90\n"),
];

fn main() -> gramsight::Result<()> {
    let streams: Vec<ByteStream> = DUMPS
        .iter()
        .map(|(id, text)| parse_hex_dump(text, id))
        .collect::<gramsight::Result<_>>()?;
    for s in &streams {
        // `??` bytes split a sample into runs; no n-gram spans a gap
        println!("{}: {} bytes in {} run(s)", s.sample_id, s.total_bytes(), s.runs.len());
    }

    let n = 4;
    println!(
        "\ndistinct {n}-grams in {}: {}",
        streams[0].sample_id,
        extract_ngrams(&streams[0], n).len()
    );

    let table = count_document_frequency(&streams, n, 4)?;
    let frequent = filter_by_frequency(&table, 2)?;
    println!(
        "{} distinct {n}-grams, {} in at least two samples:",
        table.len(),
        frequent.len()
    );
    for g in &frequent {
        println!("  {g}  df={}", table.get(g));
    }

    let vocab = FeatureVocabulary::from_ngrams(n, frequent)?;
    let matrix = vectorize_all(&streams, &[1, 1, 2], &vocab)?;
    println!(
        "\nmatrix {}x{}, {} ones",
        matrix.n_samples(),
        matrix.n_features(),
        matrix.nnz()
    );
    for (id, row) in matrix.sample_ids().iter().zip(matrix.rows()) {
        println!("  {id}: columns {row:?}");
    }
    Ok(())
}
