//! Odds reading of a one-vs-rest logistic regression: reference odds from
//! the intercept, percent odds change per feature, and a step-by-step walk
//! through one sample.
//!
//! cargo run --release --example logreg_odds

use gramsight::interpret::{odds_explanation, percent_odds_change, reference_odds};
use gramsight::models::{train, LogRegConfig, LogRegOvr, Model, ModelKind};
use gramsight::ngram_index::{FeatureVocabulary, NGram};
use gramsight::pipeline::{extract_features, select_features, PipelineConfig};
use gramsight::synth::{generate, SynthConfig};

fn main() -> gramsight::Result<()> {
    // A hand-built two-feature model: intercept -4.28426, and one feature
    // of weight 4.3916 switched on.
    let vocab = FeatureVocabulary::from_ngrams(
        6,
        vec!["00008B5DE43B".parse::<NGram>()?, "E8B8FDFFFF83".parse::<NGram>()?],
    )?;
    let model = LogRegOvr {
        classes: vec![2, 3],
        n_features: 2,
        weights: vec![vec![0.0, 0.0], vec![4.3916, -0.25]],
        intercepts: vec![0.0, -4.28426],
        config: LogRegConfig::default(),
    };
    let (p, odds) = reference_odds(-4.28426);
    println!("reference probability {p:.5}, odds {odds:.5}");
    println!("weight 4.3916 changes the odds by {:+.2}%", percent_odds_change(4.3916));
    let explanation = odds_explanation(&model, &vocab, 3, Some(&[0]))?;
    println!("{}", explanation.to_text());

    // The same reading on a model trained on the synthetic corpus.
    let corpus = generate(&SynthConfig::default())?;
    let streams: Vec<_> = corpus.samples.iter().map(|s| s.stream.clone()).collect();
    let labels: Vec<_> = corpus.samples.iter().map(|s| s.label).collect();
    let cfg = PipelineConfig::scaled_to(streams.len());
    let (candidates, matrix) = extract_features(&streams, &labels, &cfg)?;
    let sel = select_features(&candidates, &matrix, cfg.scorer_for(ModelKind::LogReg), &cfg)?;
    let Model::LogReg(trained) = train(&sel.matrix, &cfg.training_config(ModelKind::LogReg))? else {
        unreachable!("logreg config trains a logreg model")
    };
    let row = (0..sel.matrix.n_samples())
        .find(|&i| sel.matrix.labels()[i] == 3)
        .expect("class 3 sample");
    let explanation = odds_explanation(&trained, &sel.vocab, 3, Some(sel.matrix.row(row)))?.top(10);
    println!("sample {}", sel.matrix.sample_ids()[row]);
    println!("{}", explanation.to_text());
    Ok(())
}
