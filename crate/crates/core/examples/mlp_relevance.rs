//! Layer-wise relevance propagation through the MLP: dataset-level
//! rankings, per-class averages, and a single sample traced through the
//! hidden layer.
//!
//! cargo run --release --example mlp_relevance

use gramsight::interpret::{
    avg_abs_relevances, class_avg_relevances, hidden_relevances, input_relevances_for_hidden_node, lrp_relevances,
    RelevancePolicy,
};
use gramsight::models::{train, Model, ModelKind};
use gramsight::pipeline::{extract_features, select_features, PipelineConfig};
use gramsight::synth::{generate, SynthConfig};

fn main() -> gramsight::Result<()> {
    let corpus = generate(&SynthConfig::default())?;
    let streams: Vec<_> = corpus.samples.iter().map(|s| s.stream.clone()).collect();
    let labels: Vec<_> = corpus.samples.iter().map(|s| s.label).collect();
    let cfg = PipelineConfig::scaled_to(streams.len());
    let (candidates, matrix) = extract_features(&streams, &labels, &cfg)?;
    let sel = select_features(&candidates, &matrix, cfg.scorer_for(ModelKind::Mlp), &cfg)?;
    let Model::Mlp(mlp) = train(&sel.matrix, &cfg.training_config(ModelKind::Mlp))? else {
        unreachable!("mlp config trains an mlp")
    };

    let overall = avg_abs_relevances(&mlp, &sel.matrix, &sel.vocab, RelevancePolicy::PredictedClass)?;
    println!("{}", overall.top(8).to_text());
    let class = 5;
    if let Some(r) = class_avg_relevances(&mlp, &sel.matrix, &sel.vocab, class)? {
        println!("{}", r.top(8).to_text());
    }

    let i = (0..sel.matrix.n_samples())
        .find(|&i| sel.matrix.labels()[i] == class)
        .expect("class 5 sample");
    let row = sel.matrix.row(i);
    let input = lrp_relevances(&mlp, row, class)?;
    println!(
        "sample {}: output {:.4}, relevance sum {:.4}, conservation error {:.2e}",
        sel.matrix.sample_ids()[i],
        input.target_relevance,
        input.values.iter().sum::<f64>(),
        input.conservation_error()
    );

    let hidden = hidden_relevances(&mlp, row, Some(class))?;
    let activations = mlp.forward_sparse(row).hidden;
    print!(
        "{}",
        hidden
            .hidden_table(&activations)
            .lines()
            .take(6)
            .map(|l| format!("{l}\n"))
            .collect::<String>()
    );
    let node = 1
        + (0..hidden.values.len())
            .max_by(|&a, &b| hidden.values[a].total_cmp(&hidden.values[b]))
            .expect("hidden layer");
    let into_node = input_relevances_for_hidden_node(&mlp, row, node)?;
    println!("\ninputs feeding hidden node {node}:");
    println!("{}", into_node.ranked(&sel.vocab)?.top(5).to_text());
    Ok(())
}
