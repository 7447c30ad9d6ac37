use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gramsight::corpus::ClassLabel;
use gramsight::feature_select::Scorer;
use gramsight::models::ModelKind;
use gramsight::pipeline::{self, PipelineConfig};

#[derive(Parser)]
#[command(
    name = "gramsight",
    version,
    about = "Byte n-gram malware classification with interpretable models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Count n-gram document frequencies and build the candidate matrix.
    Extract,
    /// Score candidates with Chi² and/or MI and keep those above threshold.
    Select,
    /// Train the chosen model on its selected features.
    Train,
    /// Stratified k-fold cross validation.
    Evaluate,
    /// Feature rankings and per-sample explanations.
    Interpret,
    /// Clear top-ranked features and count the change in errors.
    Ablate,
    /// Map top-ranked n-grams of one sample back to its listing.
    Codemap,
    /// Write a synthetic labeled corpus and a matching config into --out.
    Synth,
}

#[derive(Args)]
struct Overrides {
    /// JSON config; relative paths in it resolve against its directory.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// n-gram length in bytes.
    #[arg(long, global = true)]
    n: Option<usize>,
    /// Minimum document frequency for a candidate n-gram.
    #[arg(long, global = true)]
    min_df: Option<u64>,
    #[arg(long, global = true, value_enum)]
    scorer: Option<Scorer>,
    /// Threshold for --scorer, or for the model's default scorer.
    #[arg(long, global = true)]
    threshold: Option<f64>,
    /// Stratified batches whose scores are averaged.
    #[arg(long, global = true)]
    batches: Option<usize>,
    #[arg(long, global = true, value_enum)]
    model: Option<ModelKind>,
    /// Class label for per-class reports.
    #[arg(long, global = true)]
    class: Option<ClassLabel>,
    /// Rows per ranking report.
    #[arg(long, global = true)]
    top: Option<usize>,
    /// Sample id for interpret and codemap.
    #[arg(long, global = true)]
    sample: Option<String>,
    /// Sets every seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for artifacts, or the target of synth.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

impl Overrides {
    fn apply(self, cfg: &mut PipelineConfig) {
        if let Some(v) = self.n {
            cfg.n = v;
            cfg.synth.n = v;
        }
        if let Some(v) = self.min_df {
            cfg.min_df = v;
        }
        if let Some(v) = self.scorer {
            cfg.scorer = Some(v);
        }
        if let Some(v) = self.batches {
            cfg.batches = v;
        }
        if let Some(v) = self.model {
            cfg.model = v;
        }
        if let Some(t) = self.threshold {
            match cfg.scorer_for(cfg.model) {
                Scorer::Chi2 => cfg.chi2_threshold = t,
                Scorer::MutualInformation => cfg.mi_threshold = t,
            }
        }
        if self.class.is_some() {
            cfg.class = self.class;
        }
        if let Some(v) = self.top {
            cfg.top = v;
        }
        if self.sample.is_some() {
            cfg.sample = self.sample;
        }
        if let Some(v) = self.seed {
            cfg.set_seed(v);
        }
        if let Some(v) = self.out {
            cfg.out_dir = v;
        }
    }
}

fn run(cli: Cli) -> gramsight::Result<Vec<PathBuf>> {
    if let Ok(v) = std::env::var("GRAMSIGHT_THREADS") {
        let threads: usize = v.parse().ok().filter(|&t| t > 0).ok_or_else(|| {
            gramsight::Error::Argument(format!("GRAMSIGHT_THREADS must be a positive integer, got `{v}`"))
        })?;
        // fails only if a pool already exists, which cannot happen here
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    let mut cfg = match &cli.overrides.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    cli.overrides.apply(&mut cfg);
    match cli.command {
        Command::Extract => pipeline::cmd_extract(&cfg),
        Command::Select => pipeline::cmd_select(&cfg),
        Command::Train => pipeline::cmd_train(&cfg),
        Command::Evaluate => pipeline::cmd_evaluate(&cfg),
        Command::Interpret => pipeline::cmd_interpret(&cfg),
        Command::Ablate => pipeline::cmd_ablate(&cfg),
        Command::Codemap => pipeline::cmd_codemap(&cfg),
        Command::Synth => pipeline::cmd_synth(&cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
