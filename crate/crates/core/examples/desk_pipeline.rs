//! The whole file-based pipeline, as the command-line tool runs it, on a
//! freshly generated synthetic corpus.
//!
//! cargo run --release --example desk_pipeline -- [DIR]

use std::path::PathBuf;
use std::time::Instant;

use gramsight::models::ModelKind;
use gramsight::pipeline::{self, PipelineConfig};

fn main() -> gramsight::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("gramsight-desk"));
    let start = Instant::now();
    pipeline::cmd_synth(&PipelineConfig {
        out_dir: dir.clone(),
        ..Default::default()
    })?;
    let mut cfg = PipelineConfig::load(&dir.join("gramsight.json"))?;
    pipeline::cmd_extract(&cfg)?;
    pipeline::cmd_select(&cfg)?;
    for kind in [ModelKind::LogReg, ModelKind::Forest, ModelKind::Mlp] {
        cfg.model = kind;
        cfg.class = None;
        pipeline::cmd_train(&cfg)?;
        let report = pipeline::evaluate(&cfg)?;
        pipeline::cmd_evaluate(&cfg)?;
        pipeline::cmd_interpret(&cfg)?;
        pipeline::cmd_ablate(&cfg)?;
        cfg.class = Some(3);
        pipeline::cmd_interpret(&cfg)?;
        pipeline::cmd_codemap(&cfg)?;
        println!(
            "{:<7} balanced accuracy {:.4}",
            kind.name(),
            report.mean_balanced_accuracy
        );
    }
    println!(
        "reports in {} ({:.1?})",
        cfg.out_dir.join("reports").display(),
        start.elapsed()
    );
    Ok(())
}
