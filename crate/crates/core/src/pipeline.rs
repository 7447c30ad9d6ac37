//! File-artifact pipeline behind the command-line tool.
//!
//! Each `cmd_*` function reads the artifacts its upstream commands wrote
//! into the output directory and writes its own. Every artifact carries the
//! full configuration that produced it: text artifacts as a first
//! `#gramsight {config}` line, JSON reports as a `config` field next to
//! `report`. Reports come as a `.txt` table and a `.json` record.
//!
//! | command   | reads                                   | writes                                   |
//! |-----------|-----------------------------------------|------------------------------------------|
//! | extract   | manifest, `<id>.bytes`                  | `docfreq.tsv`, `candidates.vocab.tsv`, `candidates.matrix.txt` |
//! | select    | candidates                              | `scores.S.tsv`, `vocab.S.tsv`, `matrix.S.txt` |
//! | train     | `vocab.S.tsv`, `matrix.S.txt`           | `model.M.txt`                            |
//! | evaluate  | `matrix.S.txt`                          | `reports/evaluate.M.*`                   |
//! | interpret | model, vocab, matrix                    | `reports/interpret.M.*`                  |
//! | ablate    | model, vocab, matrix                    | `reports/ablate.M.*`                     |
//! | codemap   | model, vocab, `<id>.bytes`, `<id>.asm`  | `reports/codemap.M.<id>.*`               |
//!
//! `S` is the scorer (`chi2` or `mi`) and `M` the model kind. Logistic
//! regression uses the Chi² features, the forest and MLP the MI features,
//! unless a scorer is configured explicitly.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codemap::{annotate_sample, render_snippets, CodeSnippet};
use crate::corpus::{
    parse_asm_listing, parse_hex_dump, stratified_partition_indices, ByteStream, ClassLabel, LabeledCorpus,
};
use crate::error::{Error, Result};
use crate::feature_select::{batched_scores, select_by_threshold, ScoreTable, Scorer};
use crate::interpret::{
    avg_abs_relevances, avg_abs_weights, best_tree_for_sample, class_avg_relevances, class_weights, gini_importances,
    hidden_relevances, input_relevances_for_hidden_node, odds_explanation, tree_contributions, RankedFeatures,
    RelevancePolicy,
};
use crate::models::{
    argmax, cross_validate, read_model, train, write_model, Classifier, ForestConfig, LogRegConfig, MlpConfig, Model,
    ModelKind, TrainingConfig,
};
use crate::ngram_index::{
    count_parallel, filter_by_frequency, vectorize, vectorize_all, BinaryFeatureMatrix, CountOptions, DocFreqCounter,
    DocFreqTable, FeatureVocabulary,
};
use crate::robustness::{ablation_report, significant_features};
use crate::synth::{generate, write_corpus, SynthConfig};

/// Sample count of the corpus the default thresholds were tuned on.
pub const REFERENCE_CORPUS_SIZE: usize = 10_868;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Directory holding `<id>.bytes` and `<id>.asm` files.
    pub corpus_dir: PathBuf,
    /// CSV with header `Id,Class`.
    pub manifest: PathBuf,
    pub out_dir: PathBuf,
    pub n: usize,
    pub min_df: u64,
    pub shards: usize,
    pub max_entries_per_shard: usize,
    pub batches: usize,
    pub chi2_threshold: f64,
    pub mi_threshold: f64,
    /// Feature set for training; by default Chi² for logistic regression
    /// and MI for the other models.
    pub scorer: Option<Scorer>,
    pub model: ModelKind,
    pub logreg: LogRegConfig,
    pub forest: ForestConfig,
    pub mlp: MlpConfig,
    pub k_folds: usize,
    pub seed: u64,
    pub class: Option<ClassLabel>,
    pub top: usize,
    pub ablate_top: usize,
    pub ablate_min_value: Option<f64>,
    pub sample: Option<String>,
    pub synth: SynthConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            corpus_dir: PathBuf::from("samples"),
            manifest: PathBuf::from("trainLabels.csv"),
            out_dir: PathBuf::from("run"),
            n: 6,
            min_df: 100,
            shards: 16,
            max_entries_per_shard: 1 << 24,
            batches: 20,
            chi2_threshold: 330.0,
            mi_threshold: 0.415,
            scorer: None,
            model: ModelKind::LogReg,
            logreg: LogRegConfig::default(),
            forest: ForestConfig::default(),
            mlp: MlpConfig::default(),
            k_folds: 5,
            seed: 0,
            class: None,
            top: 15,
            ablate_top: 9,
            ablate_min_value: None,
            sample: None,
            synth: SynthConfig::default(),
        }
    }
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

impl PipelineConfig {
    /// Defaults with the frequency floor and Chi² threshold scaled to a
    /// corpus of `samples` documents. Chi² grows linearly with sample count
    /// at fixed association; MI does not, so its threshold is kept.
    pub fn scaled_to(samples: usize) -> Self {
        let ratio = samples as f64 / REFERENCE_CORPUS_SIZE as f64;
        let d = PipelineConfig::default();
        PipelineConfig {
            min_df: ((d.min_df as f64 * ratio).round() as u64).max(2),
            chi2_threshold: round2(d.chi2_threshold * ratio),
            ..d
        }
    }

    /// Names of invalid fields; empty when the config is usable.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut check = |ok: bool, name: &str| {
            if !ok {
                out.push(name.to_string());
            }
        };
        check(self.n >= 1, "n");
        check(self.min_df >= 1, "min_df");
        check(self.shards >= 1, "shards");
        check(self.max_entries_per_shard >= 1, "max_entries_per_shard");
        check(self.batches >= 1, "batches");
        check(self.chi2_threshold.is_finite(), "chi2_threshold");
        check(self.mi_threshold.is_finite(), "mi_threshold");
        check(self.k_folds >= 2, "k_folds");
        check(self.ablate_min_value.is_none_or(f64::is_finite), "ablate_min_value");
        // model messages carry their own prefix
        out.extend(TrainingConfig::LogReg(self.logreg.clone()).problems());
        out.extend(TrainingConfig::Forest(self.forest.clone()).problems());
        out.extend(TrainingConfig::Mlp(self.mlp.clone()).problems());
        out.extend(self.synth.problems().into_iter().map(|p| format!("synth.{p}")));
        out
    }

    pub fn validate(&self) -> Result<()> {
        let fields = self.problems();
        if fields.is_empty() {
            Ok(())
        } else {
            Err(Error::Config { fields })
        }
    }

    /// Reads a JSON config; relative paths are taken relative to the file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: PipelineConfig = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.corpus_dir, &mut cfg.manifest, &mut cfg.out_dir] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// Sets every seed in the config.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.forest.seed = seed;
        self.mlp.seed = seed;
        self.synth.seed = seed;
    }

    /// Feature set used by `kind`.
    pub fn scorer_for(&self, kind: ModelKind) -> Scorer {
        self.scorer.unwrap_or(match kind {
            ModelKind::LogReg => Scorer::Chi2,
            ModelKind::Forest | ModelKind::Mlp => Scorer::MutualInformation,
        })
    }

    pub fn threshold_for(&self, scorer: Scorer) -> f64 {
        match scorer {
            Scorer::Chi2 => self.chi2_threshold,
            Scorer::MutualInformation => self.mi_threshold,
        }
    }

    pub fn training_config(&self, kind: ModelKind) -> TrainingConfig {
        match kind {
            ModelKind::LogReg => TrainingConfig::LogReg(self.logreg.clone()),
            ModelKind::Forest => TrainingConfig::Forest(self.forest.clone()),
            ModelKind::Mlp => TrainingConfig::Mlp(self.mlp.clone()),
        }
    }

    fn header(&self) -> Result<String> {
        Ok(format!("#gramsight {}\n", serde_json::to_string(self)?))
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn report_path(&self, name: &str) -> PathBuf {
        self.out_dir.join("reports").join(name)
    }
}

/// Artifact file names inside the output directory.
pub mod names {
    use crate::feature_select::Scorer;
    use crate::models::ModelKind;

    pub const DOCFREQ: &str = "docfreq.tsv";
    pub const CANDIDATE_VOCAB: &str = "candidates.vocab.tsv";
    pub const CANDIDATE_MATRIX: &str = "candidates.matrix.txt";

    pub fn scores(s: Scorer) -> String {
        format!("scores.{}.tsv", s.name())
    }
    pub fn vocab(s: Scorer) -> String {
        format!("vocab.{}.tsv", s.name())
    }
    pub fn matrix(s: Scorer) -> String {
        format!("matrix.{}.txt", s.name())
    }
    pub fn model(m: ModelKind) -> String {
        format!("model.{}.txt", m.name())
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes `body` under the config header, then reads the file back and
/// runs `check` on what was stored.
fn write_artifact(cfg: &PipelineConfig, path: &Path, body: &str, check: impl Fn(&str) -> Result<()>) -> Result<()> {
    write_file(path, &format!("{}{body}", cfg.header()?))?;
    let stored = read_body(path, "")?;
    check(&stored).map_err(|e| Error::Artifact {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Artifact contents without the config header line.
fn read_body(path: &Path, producer: &'static str) -> Result<String> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(Error::MissingArtifact {
                path: path.to_path_buf(),
                producer,
            })
        }
        Err(e) => return Err(Error::io(path, e)),
    };
    match text.split_once('\n') {
        Some((first, rest)) if first.starts_with("#gramsight ") => Ok(rest.to_string()),
        _ => Err(Error::Artifact {
            path: path.to_path_buf(),
            message: "missing `#gramsight` config header".into(),
        }),
    }
}

fn parse_artifact<T>(path: &Path, producer: &'static str, parse: impl Fn(&str) -> Result<T>) -> Result<T> {
    let body = read_body(path, producer)?;
    parse(&body).map_err(|e| Error::Artifact {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Writes `<stem>.txt` under the config header line and `<stem>.json` as
/// `{"config": ..., "report": ...}`; returns both paths.
fn write_report<T: Serialize>(cfg: &PipelineConfig, stem: &str, text: &str, record: &T) -> Result<Vec<PathBuf>> {
    let txt = cfg.report_path(&format!("{stem}.txt"));
    write_artifact(cfg, &txt, text, |_| Ok(()))?;
    let json = cfg.report_path(&format!("{stem}.json"));
    let body = serde_json::to_string_pretty(&serde_json::json!({ "config": cfg, "report": record }))? + "\n";
    write_file(&json, &body)?;
    let stored = fs::read_to_string(&json).map_err(|e| Error::io(&json, e))?;
    serde_json::from_str::<serde_json::Value>(&stored).map_err(|e| Error::Artifact {
        path: json.clone(),
        message: e.to_string(),
    })?;
    Ok(vec![txt, json])
}

fn load_corpus(cfg: &PipelineConfig) -> Result<LabeledCorpus> {
    let text = fs::read_to_string(&cfg.manifest).map_err(|e| Error::io(&cfg.manifest, e))?;
    let corpus = LabeledCorpus::from_manifest(&text)?;
    if corpus.is_empty() {
        return Err(Error::arg(format!(
            "manifest {} lists no samples",
            cfg.manifest.display()
        )));
    }
    if !cfg.corpus_dir.is_dir() {
        return Err(Error::NotFound(format!(
            "corpus directory {}",
            cfg.corpus_dir.display()
        )));
    }
    Ok(corpus)
}

fn read_stream(cfg: &PipelineConfig, id: &str) -> Result<ByteStream> {
    let path = cfg.corpus_dir.join(format!("{id}.bytes"));
    let text = fs::read_to_string(&path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::NotFound(format!("hex dump {}", path.display())),
        _ => Error::io(&path, e),
    })?;
    parse_hex_dump(&text, id).map_err(|e| Error::Artifact {
        path: path.clone(),
        message: e.to_string(),
    })
}

/// Counts document frequencies over the corpus, keeps n-grams seen in at
/// least `min_df` samples, and vectorizes every sample against them.
pub fn cmd_extract(cfg: &PipelineConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let corpus = load_corpus(cfg)?;
    let ids: Vec<&str> = corpus.samples.iter().map(|(id, _)| id.as_str()).collect();
    let options = CountOptions {
        shard_count: cfg.shards,
        max_entries_per_shard: cfg.max_entries_per_shard,
        spill_dir: None,
    };
    let chunk = ids.len().div_ceil(rayon::current_num_threads() * 4).max(1);
    let partials: Vec<DocFreqCounter> = ids
        .par_chunks(chunk)
        .map(|part| {
            let mut counter = DocFreqCounter::new(cfg.n, options.clone())?;
            for id in part {
                counter.add(&read_stream(cfg, id)?)?;
            }
            Ok(counter)
        })
        .collect::<Result<_>>()?;
    let mut partials = partials.into_iter();
    let mut counter = partials.next().expect("nonempty corpus");
    for p in partials {
        counter.merge(p)?;
    }
    let table = counter.finish_with_min_df(cfg.min_df)?;
    log::info!(
        "{} samples, {} n-grams with document frequency >= {}",
        table.corpus_size,
        table.len(),
        cfg.min_df
    );
    let vocab = FeatureVocabulary::from_ngrams(cfg.n, table.entries.keys().cloned().collect())?;
    let rows: Vec<Vec<u32>> = ids
        .par_iter()
        .map(|id| Ok(vectorize(&read_stream(cfg, id)?, &vocab)))
        .collect::<Result<_>>()?;
    let matrix = BinaryFeatureMatrix::new(
        vocab.len(),
        ids.iter().map(|s| s.to_string()).collect(),
        corpus.labels(),
        rows,
    )?;

    let docfreq = cfg.path(names::DOCFREQ);
    write_artifact(cfg, &docfreq, &table.to_tsv(), |s| {
        (DocFreqTable::from_tsv(s)? == table)
            .then_some(())
            .ok_or_else(|| Error::arg("reload differs"))
    })?;
    let vocab_path = cfg.path(names::CANDIDATE_VOCAB);
    write_artifact(cfg, &vocab_path, &vocab.to_tsv(), |s| {
        (FeatureVocabulary::from_tsv(s)? == vocab)
            .then_some(())
            .ok_or_else(|| Error::arg("reload differs"))
    })?;
    let matrix_path = cfg.path(names::CANDIDATE_MATRIX);
    write_artifact(cfg, &matrix_path, &matrix.to_text(), |s| {
        (BinaryFeatureMatrix::from_text(s)? == matrix)
            .then_some(())
            .ok_or_else(|| Error::arg("reload differs"))
    })?;
    Ok(vec![docfreq, vocab_path, matrix_path])
}

fn load_candidates(cfg: &PipelineConfig) -> Result<(FeatureVocabulary, BinaryFeatureMatrix)> {
    let vocab = parse_artifact(
        &cfg.path(names::CANDIDATE_VOCAB),
        "extract",
        FeatureVocabulary::from_tsv,
    )?;
    let matrix = parse_artifact(
        &cfg.path(names::CANDIDATE_MATRIX),
        "extract",
        BinaryFeatureMatrix::from_text,
    )?;
    if vocab.len() != matrix.n_features() {
        return Err(Error::Artifact {
            path: cfg.path(names::CANDIDATE_MATRIX),
            message: "column count differs from the candidate vocabulary".into(),
        });
    }
    Ok((vocab, matrix))
}

/// Stratified batches of row indices; a single batch holds every row.
pub fn score_batches(labels: &[ClassLabel], batches: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if batches == 1 {
        return Ok(vec![(0..labels.len()).collect()]);
    }
    stratified_partition_indices(labels, batches, seed)
}

/// In-memory counterpart of `extract`: candidate n-grams (document
/// frequency at least `min_df`) and the samples vectorized against them.
pub fn extract_features(
    streams: &[ByteStream],
    labels: &[ClassLabel],
    cfg: &PipelineConfig,
) -> Result<(FeatureVocabulary, BinaryFeatureMatrix)> {
    let options = CountOptions {
        shard_count: cfg.shards,
        max_entries_per_shard: cfg.max_entries_per_shard,
        spill_dir: None,
    };
    let table = count_parallel(streams, cfg.n, &options)?;
    let candidates = FeatureVocabulary::from_ngrams(cfg.n, filter_by_frequency(&table, cfg.min_df)?)?;
    let matrix = vectorize_all(streams, labels, &candidates)?;
    Ok((candidates, matrix))
}

#[derive(Debug, Clone)]
pub struct Selection {
    pub scores: ScoreTable,
    pub vocab: FeatureVocabulary,
    /// Candidate matrix restricted to `vocab`, in its column order.
    pub matrix: BinaryFeatureMatrix,
}

/// In-memory counterpart of `select` for one scorer.
pub fn select_features(
    candidates: &FeatureVocabulary,
    matrix: &BinaryFeatureMatrix,
    scorer: Scorer,
    cfg: &PipelineConfig,
) -> Result<Selection> {
    let batches = score_batches(matrix.labels(), cfg.batches, cfg.seed)?;
    let scores = batched_scores(matrix, candidates, scorer, &batches)?;
    let vocab = select_by_threshold(&scores, cfg.threshold_for(scorer))?;
    let columns: Vec<u32> = vocab
        .ngrams()
        .iter()
        .map(|g| candidates.column(g.as_bytes()).expect("selected from candidates"))
        .collect();
    let matrix = matrix.select_columns(&columns)?;
    Ok(Selection { scores, vocab, matrix })
}

/// Scores the candidates with each configured scorer and keeps those above
/// the scorer's threshold.
pub fn cmd_select(cfg: &PipelineConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let (candidates, matrix) = load_candidates(cfg)?;
    let scorers = match cfg.scorer {
        Some(s) => vec![s],
        None => vec![Scorer::Chi2, Scorer::MutualInformation],
    };
    let mut written = Vec::new();
    for scorer in scorers {
        let Selection {
            scores,
            vocab,
            matrix: selected,
        } = select_features(&candidates, &matrix, scorer, cfg)?;
        log::info!(
            "{}: {} of {} candidates selected",
            scorer.name(),
            vocab.len(),
            candidates.len()
        );
        let p = cfg.path(&names::scores(scorer));
        write_artifact(cfg, &p, &scores.to_tsv(), |s| {
            (ScoreTable::from_tsv(s)? == scores)
                .then_some(())
                .ok_or_else(|| Error::arg("reload differs"))
        })?;
        written.push(p);
        let p = cfg.path(&names::vocab(scorer));
        write_artifact(cfg, &p, &vocab.to_tsv(), |s| {
            (FeatureVocabulary::from_tsv(s)? == vocab)
                .then_some(())
                .ok_or_else(|| Error::arg("reload differs"))
        })?;
        written.push(p);
        let p = cfg.path(&names::matrix(scorer));
        write_artifact(cfg, &p, &selected.to_text(), |s| {
            (BinaryFeatureMatrix::from_text(s)? == selected)
                .then_some(())
                .ok_or_else(|| Error::arg("reload differs"))
        })?;
        written.push(p);
    }
    Ok(written)
}

/// Selected vocabulary and matrix for the configured model.
pub fn load_features(cfg: &PipelineConfig) -> Result<(FeatureVocabulary, BinaryFeatureMatrix)> {
    let scorer = cfg.scorer_for(cfg.model);
    let vocab = parse_artifact(&cfg.path(&names::vocab(scorer)), "select", FeatureVocabulary::from_tsv)?;
    let matrix = parse_artifact(
        &cfg.path(&names::matrix(scorer)),
        "select",
        BinaryFeatureMatrix::from_text,
    )?;
    if vocab.len() != matrix.n_features() {
        return Err(Error::Artifact {
            path: cfg.path(&names::matrix(scorer)),
            message: "column count differs from the vocabulary".into(),
        });
    }
    if vocab.is_empty() {
        return Err(Error::arg(format!(
            "the {} selection is empty; lower the threshold and rerun `gramsight select`",
            scorer.name()
        )));
    }
    Ok((vocab, matrix))
}

pub fn load_model(cfg: &PipelineConfig) -> Result<Model> {
    let model = parse_artifact(&cfg.path(&names::model(cfg.model)), "train", read_model)?;
    if model.kind() != cfg.model {
        return Err(Error::Artifact {
            path: cfg.path(&names::model(cfg.model)),
            message: format!("holds a {} model", model.kind().name()),
        });
    }
    Ok(model)
}

pub fn cmd_train(cfg: &PipelineConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let (_, matrix) = load_features(cfg)?;
    let model = train(&matrix, &cfg.training_config(cfg.model))?;
    let p = cfg.path(&names::model(cfg.model));
    let text = write_model(&model)?;
    write_artifact(cfg, &p, &text, |s| {
        (read_model(s)? == model)
            .then_some(())
            .ok_or_else(|| Error::arg("reload differs"))
    })?;
    Ok(vec![p])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub model: ModelKind,
    pub scorer: Scorer,
    pub n_features: usize,
    pub n_samples: usize,
    pub k_folds: usize,
    pub fold_balanced_accuracy: Vec<f64>,
    pub mean_balanced_accuracy: f64,
}

impl EvaluationReport {
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "{} on {} {} features, {} samples, {}-fold cross validation\n",
            self.model.name(),
            self.n_features,
            self.scorer.name(),
            self.n_samples,
            self.k_folds
        );
        for (i, a) in self.fold_balanced_accuracy.iter().enumerate() {
            s += &format!("fold {}  balanced accuracy {:.4}\n", i + 1, a);
        }
        s += &format!("mean balanced accuracy {:.4}\n", self.mean_balanced_accuracy);
        s
    }
}

/// Stratified k-fold cross validation of the configured model.
pub fn evaluate(cfg: &PipelineConfig) -> Result<EvaluationReport> {
    cfg.validate()?;
    let (vocab, matrix) = load_features(cfg)?;
    let folds = cross_validate(&matrix, &cfg.training_config(cfg.model), cfg.k_folds, cfg.seed)?;
    Ok(EvaluationReport {
        model: cfg.model,
        scorer: cfg.scorer_for(cfg.model),
        n_features: vocab.len(),
        n_samples: matrix.n_samples(),
        k_folds: cfg.k_folds,
        mean_balanced_accuracy: folds.iter().sum::<f64>() / folds.len() as f64,
        fold_balanced_accuracy: folds,
    })
}

pub fn cmd_evaluate(cfg: &PipelineConfig) -> Result<Vec<PathBuf>> {
    let report = evaluate(cfg)?;
    write_report(
        cfg,
        &format!("evaluate.{}", cfg.model.name()),
        &report.to_text(),
        &report,
    )
}

/// Row of the configured sample, or of the `class` sample the model is
/// most confident about (first on ties).
fn pick_sample(cfg: &PipelineConfig, model: &Model, matrix: &BinaryFeatureMatrix, class: ClassLabel) -> Result<usize> {
    if let Some(id) = &cfg.sample {
        return matrix
            .index_of(id)
            .ok_or_else(|| Error::NotFound(format!("sample `{id}` is not in the corpus")));
    }
    let k = model.class_index(class)?;
    let mut best: Option<(usize, f64)> = None;
    for i in (0..matrix.n_samples()).filter(|&i| matrix.labels()[i] == class) {
        let p = model.probabilities_unchecked(matrix.row(i))[k];
        if best.is_none_or(|(_, b)| p > b) {
            best = Some((i, p));
        }
    }
    best.map(|(i, _)| i)
        .ok_or_else(|| Error::NotFound(format!("no sample of class {class}")))
}

/// Ranking that `ablate` and `codemap` use for the configured model.
pub fn model_ranking(
    cfg: &PipelineConfig,
    model: &Model,
    vocab: &FeatureVocabulary,
    matrix: &BinaryFeatureMatrix,
) -> Result<RankedFeatures> {
    match (model, cfg.class) {
        (Model::LogReg(m), Some(c)) => class_weights(m, vocab, c),
        (Model::LogReg(m), None) => avg_abs_weights(m, vocab),
        (Model::Forest(m), _) => gini_importances(m, vocab),
        (Model::Mlp(m), Some(c)) => class_avg_relevances(m, matrix, vocab, c)?
            .ok_or_else(|| Error::NotFound(format!("no sample of class {c} is classified correctly"))),
        (Model::Mlp(m), None) => avg_abs_relevances(m, matrix, vocab, RelevancePolicy::PredictedClass),
    }
}

/// Report record tagged with the sample it explains.
#[derive(Serialize)]
struct Sampled<'a, T> {
    sample: &'a str,
    #[serde(flatten)]
    detail: &'a T,
}

pub fn cmd_interpret(cfg: &PipelineConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let (vocab, matrix) = load_features(cfg)?;
    let model = load_model(cfg)?;
    let kind = cfg.model.name();
    let mut written = Vec::new();
    let mut emit = |stem: String, text: String, record: serde_json::Value| -> Result<()> {
        written.extend(write_report(cfg, &stem, &text, &record)?);
        Ok(())
    };
    match &model {
        Model::LogReg(m) => {
            let r = avg_abs_weights(m, &vocab)?.top(cfg.top);
            emit(
                format!("interpret.{kind}.avg_abs_weight"),
                r.to_text(),
                serde_json::to_value(&r)?,
            )?;
            if let Some(c) = cfg.class {
                let r = class_weights(m, &vocab, c)?.top(cfg.top);
                emit(
                    format!("interpret.{kind}.class{c}.weight"),
                    r.to_text(),
                    serde_json::to_value(&r)?,
                )?;
                let i = pick_sample(cfg, &model, &matrix, c)?;
                let id = &matrix.sample_ids()[i];
                let odds = odds_explanation(m, &vocab, c, Some(matrix.row(i)))?.top(cfg.top);
                emit(
                    format!("interpret.{kind}.class{c}.odds"),
                    format!("sample {id}\n{}", odds.to_text()),
                    serde_json::to_value(Sampled {
                        sample: id,
                        detail: &odds,
                    })?,
                )?;
            }
        }
        Model::Forest(f) => {
            let r = gini_importances(f, &vocab)?.top(cfg.top);
            emit(
                format!("interpret.{kind}.gini_importance"),
                r.to_text(),
                serde_json::to_value(&r)?,
            )?;
            if let Some(c) = cfg.class {
                let i = pick_sample(cfg, &model, &matrix, c)?;
                let id = &matrix.sample_ids()[i];
                let tree = best_tree_for_sample(f, matrix.row(i), c)?;
                let b = tree_contributions(f, tree, matrix.row(i), &vocab)?;
                let k = model.class_index(c)?;
                emit(
                    format!("interpret.{kind}.class{c}.contributions"),
                    format!("sample {id}\n{}", b.to_text(k)),
                    serde_json::to_value(Sampled { sample: id, detail: &b })?,
                )?;
            }
        }
        Model::Mlp(m) => {
            let r = avg_abs_relevances(m, &matrix, &vocab, RelevancePolicy::PredictedClass)?.top(cfg.top);
            emit(
                format!("interpret.{kind}.avg_abs_relevance"),
                r.to_text(),
                serde_json::to_value(&r)?,
            )?;
            if let Some(c) = cfg.class {
                match class_avg_relevances(m, &matrix, &vocab, c)? {
                    Some(r) => {
                        let r = r.top(cfg.top);
                        emit(
                            format!("interpret.{kind}.class{c}.avg_relevance"),
                            r.to_text(),
                            serde_json::to_value(&r)?,
                        )?;
                    }
                    None => log::warn!("no sample of class {c} is classified correctly; class averages skipped"),
                }
                let i = pick_sample(cfg, &model, &matrix, c)?;
                let id = &matrix.sample_ids()[i];
                let row = matrix.row(i);
                let hidden = hidden_relevances(m, row, Some(c))?;
                let activations = m.forward_sparse(row).hidden;
                emit(
                    format!("interpret.{kind}.class{c}.hidden"),
                    format!("sample {id}\n{}", hidden.hidden_table(&activations)),
                    serde_json::to_value(Sampled {
                        sample: id,
                        detail: &hidden,
                    })?,
                )?;
                // the most relevant hidden node, 1-based
                let node = argmax(&hidden.values) + 1;
                let r = input_relevances_for_hidden_node(m, row, node)?
                    .ranked(&vocab)?
                    .top(cfg.top);
                emit(
                    format!("interpret.{kind}.class{c}.node{node}"),
                    format!("sample {id} hidden node {node}\n{}", r.to_text()),
                    serde_json::to_value(Sampled { sample: id, detail: &r })?,
                )?;
            }
        }
    }
    Ok(written)
}

pub fn cmd_ablate(cfg: &PipelineConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let (vocab, matrix) = load_features(cfg)?;
    let model = load_model(cfg)?;
    let ranked = model_ranking(cfg, &model, &vocab, &matrix)?;
    let columns = match cfg.ablate_min_value {
        Some(v) => significant_features(&ranked, None, Some(v))?,
        None => significant_features(&ranked, Some(cfg.ablate_top), None)?,
    };
    let report = ablation_report(&model, &matrix, &vocab, &columns)?;
    let stem = match cfg.class {
        Some(c) => format!("ablate.{}.class{c}", cfg.model.name()),
        None => format!("ablate.{}", cfg.model.name()),
    };
    write_report(cfg, &stem, &report.to_text(), &report)
}

#[derive(Debug, Clone, Serialize)]
struct CodemapRecord<'a> {
    sample: &'a str,
    snippets: &'a [CodeSnippet],
}

pub fn cmd_codemap(cfg: &PipelineConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let (vocab, matrix) = load_features(cfg)?;
    let model = load_model(cfg)?;
    let ranked = model_ranking(cfg, &model, &vocab, &matrix)?;
    let i = match cfg.class {
        Some(c) => pick_sample(cfg, &model, &matrix, c)?,
        None => match &cfg.sample {
            Some(id) => matrix
                .index_of(id)
                .ok_or_else(|| Error::NotFound(format!("sample `{id}` is not in the corpus")))?,
            None => 0,
        },
    };
    let id = matrix.sample_ids()[i].clone();
    let stream = read_stream(cfg, &id)?;
    let asm_path = cfg.corpus_dir.join(format!("{id}.asm"));
    let asm = fs::read_to_string(&asm_path).map_err(|e| Error::io(&asm_path, e))?;
    let listing = parse_asm_listing(&asm);
    let snippets = annotate_sample(&stream, &listing, &ranked, cfg.top);
    let text = format!("sample {id}\n{}", render_snippets(&snippets));
    write_report(
        cfg,
        &format!("codemap.{}.{id}", cfg.model.name()),
        &text,
        &CodemapRecord {
            sample: &id,
            snippets: &snippets,
        },
    )
}

/// Generates the synthetic corpus into `out_dir` along with a
/// `gramsight.json` whose thresholds are scaled to its size.
pub fn cmd_synth(cfg: &PipelineConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let corpus = generate(&cfg.synth)?;
    let dir = &cfg.out_dir;
    write_corpus(&corpus, dir)?;
    let mut run = PipelineConfig::scaled_to(corpus.samples.len());
    run.synth = cfg.synth.clone();
    run.set_seed(cfg.seed);
    run.corpus_dir = PathBuf::from("samples");
    run.manifest = PathBuf::from("trainLabels.csv");
    run.out_dir = PathBuf::from("run");
    let config_path = dir.join("gramsight.json");
    write_file(&config_path, &(serde_json::to_string_pretty(&run)? + "\n"))?;
    Ok(vec![
        dir.join("samples"),
        dir.join("trainLabels.csv"),
        dir.join("planted.tsv"),
        config_path,
    ])
}

/// Runs every stage for the configured model, after `extract` and
/// `select`.
pub fn run_all(cfg: &PipelineConfig) -> Result<Vec<PathBuf>> {
    let mut written = cmd_extract(cfg)?;
    written.extend(cmd_select(cfg)?);
    written.extend(cmd_train(cfg)?);
    written.extend(cmd_evaluate(cfg)?);
    written.extend(cmd_interpret(cfg)?);
    written.extend(cmd_ablate(cfg)?);
    written.extend(cmd_codemap(cfg)?);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scaled_preset() {
        let c = PipelineConfig::scaled_to(540);
        assert_eq!(c.min_df, 5);
        assert_eq!(c.chi2_threshold, 16.4);
        assert_eq!(c.mi_threshold, 0.415);
        let full = PipelineConfig::scaled_to(REFERENCE_CORPUS_SIZE);
        assert_eq!((full.min_df, full.chi2_threshold), (100, 330.0));
    }

    #[test]
    fn validation_lists_fields() {
        let mut c = PipelineConfig {
            n: 0,
            k_folds: 1,
            ..Default::default()
        };
        c.logreg.c = -1.0;
        match c.validate() {
            Err(Error::Config { fields }) => {
                assert!(fields.contains(&"n".to_string()));
                assert!(fields.contains(&"k_folds".to_string()));
                assert!(fields.iter().any(|f| f.starts_with("logreg.c ")));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn partial_config_json() {
        let c: PipelineConfig = serde_json::from_str(r#"{"n": 4, "forest": {"n_trees": 7}}"#).unwrap();
        assert_eq!(c.n, 4);
        assert_eq!(c.forest.n_trees, 7);
        assert_eq!(c.forest.min_leaf_fraction, 0.0001);
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn missing_artifact_names_producer() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = PipelineConfig {
            out_dir: dir.path().to_path_buf(),
            ..Default::default()
        };
        match cmd_select(&cfg) {
            Err(Error::MissingArtifact { producer, .. }) => assert_eq!(producer, "extract"),
            other => panic!("{other:?}"),
        }
        match cmd_interpret(&cfg) {
            Err(Error::MissingArtifact { producer, .. }) => assert_eq!(producer, "select"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn extract_rejects_empty_corpus() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir(dir.path().join("samples")).unwrap();
        fs::write(dir.path().join("trainLabels.csv"), "Id,Class\n").unwrap();
        let cfg = PipelineConfig {
            corpus_dir: dir.path().join("samples"),
            manifest: dir.path().join("trainLabels.csv"),
            out_dir: dir.path().join("run"),
            ..Default::default()
        };
        assert!(cmd_extract(&cfg).is_err());
        assert!(!dir.path().join("run").exists());
    }
}
