//! Gini importances of a random forest and the decision-path breakdown of
//! one tree's prediction into a bias plus per-feature contributions.
//!
//! cargo run --release --example forest_contributions

use gramsight::interpret::{best_tree_for_sample, gini_importances, tree_contributions};
use gramsight::models::{train, Classifier, Model, ModelKind};
use gramsight::pipeline::{extract_features, select_features, PipelineConfig};
use gramsight::synth::{generate, SynthConfig};

fn main() -> gramsight::Result<()> {
    let corpus = generate(&SynthConfig::default())?;
    let streams: Vec<_> = corpus.samples.iter().map(|s| s.stream.clone()).collect();
    let labels: Vec<_> = corpus.samples.iter().map(|s| s.label).collect();
    let cfg = PipelineConfig::scaled_to(streams.len());
    let (candidates, matrix) = extract_features(&streams, &labels, &cfg)?;
    let sel = select_features(&candidates, &matrix, cfg.scorer_for(ModelKind::Forest), &cfg)?;
    let model = train(&sel.matrix, &cfg.training_config(ModelKind::Forest))?;
    let Model::Forest(forest) = &model else {
        unreachable!("forest config trains a forest")
    };

    println!("{}", gini_importances(forest, &sel.vocab)?.top(10).to_text());

    let class = 7;
    let i = (0..sel.matrix.n_samples())
        .find(|&i| sel.matrix.labels()[i] == class)
        .expect("class 7 sample");
    let row = sel.matrix.row(i);
    let tree = best_tree_for_sample(forest, row, class)?;
    let breakdown = tree_contributions(forest, tree, row, &sel.vocab)?;
    println!("sample {}", sel.matrix.sample_ids()[i]);
    println!("{}", breakdown.to_text(model.class_index(class)?));
    // bias + Σ contributions reproduces the leaf exactly
    println!("max |leaf - (bias + Σ delta)| = {:.3e}", breakdown.residual());
    Ok(())
}
