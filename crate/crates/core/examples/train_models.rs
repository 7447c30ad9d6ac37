//! Train logistic regression, random forest and MLP on their selected
//! features and report cross-validated balanced accuracy.
//!
//! cargo run --release --example train_models

use gramsight::models::{cross_validate, read_model, train, write_model, Classifier, ModelKind};
use gramsight::pipeline::{extract_features, select_features, PipelineConfig};
use gramsight::synth::{generate, SynthConfig};

fn main() -> gramsight::Result<()> {
    let corpus = generate(&SynthConfig::default())?;
    let streams: Vec<_> = corpus.samples.iter().map(|s| s.stream.clone()).collect();
    let labels: Vec<_> = corpus.samples.iter().map(|s| s.label).collect();
    let cfg = PipelineConfig::scaled_to(streams.len());
    let (candidates, matrix) = extract_features(&streams, &labels, &cfg)?;

    for kind in [ModelKind::LogReg, ModelKind::Forest, ModelKind::Mlp] {
        let scorer = cfg.scorer_for(kind);
        let sel = select_features(&candidates, &matrix, scorer, &cfg)?;
        let training = cfg.training_config(kind);

        let start = std::time::Instant::now();
        let folds = cross_validate(&sel.matrix, &training, cfg.k_folds, cfg.seed)?;
        let mean = folds.iter().sum::<f64>() / folds.len() as f64;
        println!(
            "{:<7}{:>3} {:<4} features  balanced accuracy {:.4} over {} folds  ({:.1?})",
            kind.name(),
            sel.vocab.len(),
            scorer.name(),
            mean,
            folds.len(),
            start.elapsed()
        );

        // artifacts round-trip bit for bit
        let model = train(&sel.matrix, &training)?;
        assert_eq!(read_model(&write_model(&model)?)?, model);
        let p = model.predict(sel.matrix.row(0))?;
        println!(
            "       sample {} -> class {} (labeled {})",
            sel.matrix.sample_ids()[0],
            p.class,
            sel.matrix.labels()[0]
        );
    }
    Ok(())
}
