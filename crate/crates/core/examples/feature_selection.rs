//! Chi² and mutual-information selection on a synthetic corpus with
//! planted discriminative 6-grams, checked against the planted truth.
//!
//! cargo run --release --example feature_selection

use gramsight::feature_select::Scorer;
use gramsight::pipeline::{extract_features, select_features, PipelineConfig};
use gramsight::synth::{generate, PlantedKind, SynthConfig};

fn main() -> gramsight::Result<()> {
    let corpus = generate(&SynthConfig::default())?;
    let streams: Vec<_> = corpus.samples.iter().map(|s| s.stream.clone()).collect();
    let labels: Vec<_> = corpus.samples.iter().map(|s| s.label).collect();
    // thresholds scaled from the full-size defaults to this corpus
    let cfg = PipelineConfig::scaled_to(streams.len());
    println!(
        "{} samples, {:.1} MB; min_df {}, chi2 > {}, mi > {}",
        streams.len(),
        corpus.total_bytes() as f64 / 1e6,
        cfg.min_df,
        cfg.chi2_threshold,
        cfg.mi_threshold
    );

    let (candidates, matrix) = extract_features(&streams, &labels, &cfg)?;
    println!("{} candidate 6-grams", candidates.len());

    let planted = corpus.planted_set();
    for scorer in [Scorer::Chi2, Scorer::MutualInformation] {
        let sel = select_features(&candidates, &matrix, scorer, &cfg)?;
        let hits = sel.vocab.ngrams().iter().filter(|g| planted.contains(*g)).count();
        println!(
            "\n{}: {} selected, {} of them planted",
            scorer.name(),
            sel.vocab.len(),
            hits
        );
        for g in sel.vocab.ngrams().iter().take(8) {
            let kind = corpus
                .planted
                .iter()
                .find(|p| &p.ngram == g)
                .map_or("background".to_string(), |p| match p.kind {
                    PlantedKind::Marker => format!("marker of class {}", p.classes[0]),
                    PlantedKind::CodeBit(b) => format!("code bit {b}, classes {:?}", p.classes),
                });
            println!("  {g}  {:>9.4}  {kind}", sel.scores.scores[g]);
        }
    }
    Ok(())
}
