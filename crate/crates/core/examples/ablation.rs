//! Clear the most important features and count how the errors move, per
//! class.
//!
//! cargo run --release --example ablation

use gramsight::interpret::{avg_abs_weights, class_weights};
use gramsight::models::{train, Model, ModelKind};
use gramsight::pipeline::{extract_features, select_features, PipelineConfig};
use gramsight::robustness::{ablation_report, significant_features};
use gramsight::synth::{generate, SynthConfig};

fn main() -> gramsight::Result<()> {
    let corpus = generate(&SynthConfig::default())?;
    let streams: Vec<_> = corpus.samples.iter().map(|s| s.stream.clone()).collect();
    let labels: Vec<_> = corpus.samples.iter().map(|s| s.label).collect();
    let cfg = PipelineConfig::scaled_to(streams.len());
    let (candidates, matrix) = extract_features(&streams, &labels, &cfg)?;
    let sel = select_features(&candidates, &matrix, cfg.scorer_for(ModelKind::LogReg), &cfg)?;
    let model = train(&sel.matrix, &cfg.training_config(ModelKind::LogReg))?;
    let Model::LogReg(lr) = &model else { unreachable!() };

    // globally important features are redundant across the planted code,
    // so the model shrugs off losing a few of them
    let ranked = avg_abs_weights(lr, &sel.vocab)?;
    for k in [1, 3, 9] {
        let columns = significant_features(&ranked, Some(k), None)?;
        let report = ablation_report(&model, &sel.matrix, &sel.vocab, &columns)?;
        println!(
            "top {k} overall: {} cells cleared, errors {} -> {}",
            report.cells_changed, report.baseline_errors, report.ablated_errors
        );
    }

    // one class's own evidence is not
    let class = 3;
    let planted = corpus.planted_for(class).len();
    let ranked = class_weights(lr, &sel.vocab, class)?;
    let columns = significant_features(&ranked, Some(planted), None)?;
    let report = ablation_report(&model, &sel.matrix, &sel.vocab, &columns)?;
    println!(
        "
top {planted} weights of class {class}:\n{}",
        report.to_text()
    );
    Ok(())
}
