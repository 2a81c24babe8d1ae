use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use genreflow_core::corpus::{
    build_corpus_outcomes, load_corpus, parse_order, write_corpus, CorpusEntry, CorpusFile, CorpusHeader,
    FusionConfig, ModalityMask, Recognizers,
};
use genreflow_core::manifest::{
    load_manifest, load_unlabeled_manifest, split_dataset, split_dataset_with, write_manifest,
    SplitOptions, TrailerRecord,
};
use genreflow_core::media::plugin::ExternalPlugin;
use genreflow_core::media::{SilenceParams, SituationRecognizer, SpeechRecognizer};
use genreflow_core::metrics::{
    genre_pr_curves, micro_pr_curve, pr_curve_csv, prf_at_threshold, prf_report_csv, prf_report_text,
    AuPrcReport, MetricsError,
};
use genreflow_core::models::{train, Dataset, FeatureModel, ModelKind, TrainedModel};
use genreflow_core::textprep::{tokenize, Vocabulary};
use genreflow_core::tfidf::TfidfModel;
use genreflow_core::{LabelVector, ScoredPrediction, GENRES, NUM_GENRES};

use crate::args::{
    BuildCorpusArgs, EvaluateArgs, ExportPrArgs, IngestArgs, KindArg, ModelArgs, PipelineArgs, PredictArgs, Subset,
    TrainArgs,
};
use crate::exit::{ArtifactError, ConfigError};

pub const CORPUS_FILE: &str = "corpus.tsv";
pub const BUILD_REPORT: &str = "build_report.csv";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const VOCAB_FILE: &str = "vocab.tsv";
pub const TFIDF_FILE: &str = "tfidf.tsv";
pub const HISTORY_FILE: &str = "history.csv";
pub const SCORES_FILE: &str = "scores.csv";
pub const PREDICTIONS_FILE: &str = "predictions.csv";

fn config_err(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

fn require_file(path: &Path, what: &str) -> Result<()> {
    if !path.is_file() {
        return Err(config_err(format!("{what} `{}` does not exist", path.display())));
    }
    Ok(())
}

fn prepare_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))
}

fn write_file(path: &Path, body: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, body).with_context(|| format!("writing {}", path.display()))
}

fn genre_slug(i: usize) -> String {
    GENRES[i].name().to_ascii_lowercase().replace(' ', "_")
}

pub fn ingest(a: IngestArgs) -> Result<()> {
    require_file(&a.manifest, "manifest")?;
    let records = load_manifest(&a.manifest)?;
    let split = split_dataset_with(&records, a.eval_fraction, a.seed, SplitOptions { stratify: a.stratify })?;
    prepare_out(&a.out)?;
    let mut canonical = Vec::new();
    write_manifest(&mut canonical, &records)?;
    write_file(&a.out.join("manifest.csv"), canonical)?;

    let eval_ids: std::collections::HashSet<&str> = split.eval.iter().map(|r| r.id.as_str()).collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["id", "split", "labels", "has_video", "has_audio", "seed"])?;
    for r in &records {
        let part = if eval_ids.contains(r.id.as_str()) { "eval" } else { "train" };
        w.write_record([
            r.id.as_str(),
            part,
            &r.labels().to_bits(),
            &r.video_path.is_some().to_string(),
            &r.audio_path.is_some().to_string(),
            &a.seed.to_string(),
        ])?;
    }
    write_file(&a.out.join("split.csv"), w.into_inner()?)?;
    println!(
        "{} trailers: {} train, {} eval (seed {})",
        records.len(),
        split.train.len(),
        split.eval.len(),
        a.seed
    );
    Ok(())
}

/// Plugins actually needed by these records under this mask.
struct Plugins {
    speech: Option<ExternalPlugin>,
    situation: Option<ExternalPlugin>,
}

impl Plugins {
    fn recognizers(&self) -> Recognizers<'_> {
        Recognizers {
            speech: self.speech.as_ref().map(|p| p as &dyn SpeechRecognizer),
            situation: self.situation.as_ref().map(|p| p as &dyn SituationRecognizer),
        }
    }
}

fn pipeline_setup(p: &PipelineArgs, manifest: &Path, records: &[TrailerRecord]) -> Result<(FusionConfig, Plugins)> {
    let modalities: ModalityMask = p.modalities.parse().map_err(|e| config_err(format!("--modalities: {e}")))?;
    let order = parse_order(&p.order).map_err(|e| config_err(format!("--order: {e}")))?;
    if p.frame_stride == 0 {
        return Err(config_err("--frame-stride must be at least 1"));
    }
    if p.workers == 0 {
        return Err(config_err("--workers must be at least 1"));
    }
    let silence = SilenceParams {
        threshold_db: p.silence_db,
        min_silence_ms: p.min_silence_ms,
        min_chunk_ms: p.min_chunk_ms,
    };
    let plugin = |path: &Option<PathBuf>, flag: &str, needed: bool| -> Result<Option<ExternalPlugin>> {
        match path {
            Some(p) if p.is_file() => Ok(Some(ExternalPlugin::new(p))),
            Some(p) => Err(config_err(format!("{flag} `{}` does not exist", p.display()))),
            None if needed => Err(config_err(format!("{flag} is required for the enabled modalities"))),
            None => Ok(None),
        }
    };
    let needs_video = modalities.situation && records.iter().any(|r| r.video_path.is_some());
    let needs_audio = modalities.dialogue && records.iter().any(|r| r.audio_path.is_some());
    let plugins = Plugins {
        situation: plugin(&p.situation_plugin, "--situation-plugin", needs_video)?,
        speech: plugin(&p.speech_plugin, "--speech-plugin", needs_audio)?,
    };
    let media_root = p
        .media_root
        .clone()
        .or_else(|| manifest.parent().map(Path::to_path_buf));
    let config = FusionConfig {
        modalities,
        order,
        frame_stride: p.frame_stride,
        silence,
        include_verb_definitions: p.verb_definitions,
        media_root,
        workers: p.workers,
    };
    Ok((config, plugins))
}

fn token_count(s: &str) -> usize {
    s.split_whitespace().count()
}

pub fn build_corpus(a: BuildCorpusArgs) -> Result<()> {
    require_file(&a.manifest, "manifest")?;
    let records = load_manifest(&a.manifest)?;
    let (config, plugins) = pipeline_setup(&a.pipeline, &a.manifest, &records)?;
    prepare_out(&a.out)?;
    let outcomes = build_corpus_outcomes(&records, plugins.recognizers(), &config)?;

    let mut report = csv::Writer::from_writer(Vec::new());
    report.write_record([
        "id",
        "status",
        "situation_tokens",
        "dialogue_tokens",
        "metadata_tokens",
        "error",
    ])?;
    let mut entries = Vec::new();
    let mut first_failure = None;
    for (record, outcome) in records.iter().zip(outcomes) {
        match outcome {
            Ok(c) => {
                report.write_record([
                    record.id.as_str(),
                    "ok",
                    &token_count(&c.c_s).to_string(),
                    &token_count(&c.c_d).to_string(),
                    &token_count(&c.c_m).to_string(),
                    "",
                ])?;
                entries.push(CorpusEntry {
                    id: record.id.clone(),
                    labels: record.labels(),
                    text: c.c_sd,
                });
            }
            Err(e) => {
                report.write_record([record.id.as_str(), "failed", "", "", "", &e.to_string()])?;
                eprintln!("warning: {e}");
                first_failure.get_or_insert(e);
            }
        }
    }
    write_file(&a.out.join(BUILD_REPORT), report.into_inner()?)?;
    if let Some(e) = first_failure {
        if !a.skip_failures {
            return Err(anyhow::Error::new(e).context("corpus build failed (see build_report.csv)"));
        }
    }
    if entries.iter().all(|e| e.text.is_empty()) {
        return Err(config_err("every fused corpus is empty; nothing to write"));
    }
    let header = CorpusHeader {
        modalities: config.modalities,
        order: config.order,
    };
    let mut body = Vec::new();
    write_corpus(&mut body, &header, &entries)?;
    write_file(&a.out.join(CORPUS_FILE), body)?;
    println!("{} of {} trailers written to {}", entries.len(), records.len(), a.out.join(CORPUS_FILE).display());
    Ok(())
}

fn entry_tokens(entries: &[CorpusEntry]) -> Vec<Vec<String>> {
    entries.iter().map(|e| tokenize(&e.text)).collect()
}

fn load_corpus_file(path: &Path) -> Result<CorpusFile> {
    require_file(path, "corpus")?;
    let file = load_corpus(path).with_context(|| format!("reading corpus {}", path.display()))?;
    if file.entries.is_empty() {
        return Err(config_err(format!("corpus {} has no entries", path.display())));
    }
    Ok(file)
}

pub fn train_cmd(a: TrainArgs) -> Result<()> {
    if a.epochs == 0 {
        return Err(config_err("--epochs must be at least 1"));
    }
    if a.batch_size == 0 {
        return Err(config_err("--batch-size must be at least 1"));
    }
    let corpus = load_corpus_file(&a.corpus)?;
    let split = split_dataset(&corpus.entries, a.eval_fraction, a.seed)
        .map_err(|e| config_err(format!("split: {e}")))?;
    if split.train.is_empty() {
        return Err(config_err("the training split is empty"));
    }
    let train_tokens = entry_tokens(&split.train);
    let features = match a.kind {
        KindArg::Ecnet => FeatureModel::fit_vocabulary(&train_tokens, a.min_df, a.max_len)?,
        KindArg::Tfanet => FeatureModel::fit_tfidf(&train_tokens, a.min_df, Some(a.max_features))?,
    };
    let mut config = features.model_config();
    config.epochs = a.epochs;
    config.batch_size = a.batch_size;
    config.learning_rate = a.learning_rate;
    config.seed = a.seed;
    config.eval_fraction = a.eval_fraction;
    config.validate()?;

    let labels = |es: &[CorpusEntry]| es.iter().map(|e| e.labels).collect::<Vec<LabelVector>>();
    let train_set = Dataset::<f64>::encode(&features, &train_tokens, &labels(&split.train));
    let eval_set = Dataset::<f64>::encode(&features, &entry_tokens(&split.eval), &labels(&split.eval));
    let network = config.build::<f64>()?;
    println!(
        "training {} on {} trailers ({} held out), {} parameters",
        config.kind,
        train_set.len(),
        eval_set.len(),
        network.total_params()
    );
    let model = train(network, &train_set, Some(&eval_set), &config).context("training")?;

    prepare_out(&a.out)?;
    model.save(&a.out.join(CHECKPOINT_FILE))?;
    match &features {
        FeatureModel::Vocabulary { vocab, .. } => write_file(&a.out.join(VOCAB_FILE), vocab.to_text())?,
        FeatureModel::Tfidf(m) => write_file(&a.out.join(TFIDF_FILE), m.to_text())?,
    }
    let mut hist = String::from("epoch,train_loss,train_accuracy,eval_loss\n");
    for r in &model.history {
        let eval = r.eval_loss.map_or(String::new(), |v| v.to_string());
        hist.push_str(&format!("{},{},{},{}\n", r.epoch, r.train_loss, r.train_accuracy, eval));
    }
    write_file(&a.out.join(HISTORY_FILE), hist)?;
    if let Some(last) = model.history.last() {
        println!(
            "epoch {}: train loss {:.4}, subset accuracy {:.4}",
            last.epoch, last.train_loss, last.train_accuracy
        );
    }
    Ok(())
}

struct LoadedModel {
    model: TrainedModel<f64>,
    features: FeatureModel,
}

fn load_model(m: &ModelArgs) -> Result<LoadedModel> {
    let ckpt = m.checkpoint.as_ref().ok_or_else(|| config_err("--checkpoint is required"))?;
    require_file(ckpt, "checkpoint")?;
    let model = TrainedModel::<f64>::load(ckpt).with_context(|| format!("loading {}", ckpt.display()))?;
    let default_name = match model.config.kind {
        ModelKind::Ecnet => VOCAB_FILE,
        ModelKind::Tfanet => TFIDF_FILE,
    };
    let path = m
        .features
        .clone()
        .unwrap_or_else(|| ckpt.parent().unwrap_or(Path::new(".")).join(default_name));
    require_file(&path, "feature model")?;
    let text = fs::read_to_string(&path)?;
    let features = match model.config.kind {
        ModelKind::Ecnet => FeatureModel::Vocabulary {
            vocab: Vocabulary::from_text(&text).map_err(|e| ArtifactError(format!("{}: {e}", path.display())))?,
            max_len: model.config.max_len,
        },
        ModelKind::Tfanet => FeatureModel::Tfidf(
            TfidfModel::from_text(&text).map_err(|e| ArtifactError(format!("{}: {e}", path.display())))?,
        ),
    };
    Ok(LoadedModel { model, features })
}

fn score_entries(loaded: &LoadedModel, entries: &[CorpusEntry]) -> Result<Vec<ScoredPrediction>> {
    entries
        .iter()
        .map(|e| {
            let x = loaded.features.encode::<f64>(&tokenize(&e.text));
            Ok(ScoredPrediction {
                trailer_id: e.id.clone(),
                scores: loaded.model.predict(&x)?,
                truth: e.labels,
            })
        })
        .collect()
}

const SCORE_HEADER: [&str; 2] = ["id", "labels"];

fn write_scores(preds: &[ScoredPrediction]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<&str> = SCORE_HEADER.to_vec();
    header.extend(GENRES.iter().map(|g| g.name()));
    w.write_record(&header)?;
    for p in preds {
        let mut row = vec![p.trailer_id.clone(), p.truth.to_bits()];
        row.extend(p.scores.iter().map(|s| s.to_string()));
        w.write_record(&row)?;
    }
    Ok(w.into_inner()?)
}

fn read_scores(path: &Path) -> Result<Vec<ScoredPrediction>> {
    require_file(path, "scores file")?;
    let bad = |line: u64, why: String| ArtifactError(format!("{}:{line}: {why}", path.display()));
    let mut rdr = csv::Reader::from_path(path)?;
    let mut preds = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != 2 + NUM_GENRES {
            return Err(bad(line, format!("expected {} columns", 2 + NUM_GENRES)).into());
        }
        let truth = LabelVector::from_bits(&row[1]).map_err(|e| bad(line, e.to_string()))?;
        let mut scores = [0.0f64; NUM_GENRES];
        for (g, s) in scores.iter_mut().enumerate() {
            *s = row[2 + g]
                .trim()
                .parse()
                .map_err(|_| bad(line, format!("bad score `{}`", &row[2 + g])))?;
            if !s.is_finite() {
                return Err(bad(line, "non-finite score".into()).into());
            }
        }
        preds.push(ScoredPrediction {
            trailer_id: row[0].to_string(),
            scores,
            truth,
        });
    }
    if preds.is_empty() {
        return Err(config_err(format!("scores file {} is empty", path.display())));
    }
    Ok(preds)
}

fn write_pr_curves(preds: &[ScoredPrediction], dir: &Path) -> Result<()> {
    let pr_dir = dir.join("pr");
    prepare_out(&pr_dir)?;
    for (g, curve) in genre_pr_curves(preds)?.into_iter().enumerate() {
        let path = pr_dir.join(format!("{}.csv", genre_slug(g)));
        match curve {
            Ok(c) => write_file(&path, pr_curve_csv(&c))?,
            // header only: the curve is undefined without positives
            Err(MetricsError::NoPositives) => write_file(&path, "threshold,recall,precision\n")?,
            Err(e) => return Err(e.into()),
        }
    }
    match micro_pr_curve(preds) {
        Ok(c) => write_file(&pr_dir.join("micro.csv"), pr_curve_csv(&c))?,
        Err(MetricsError::NoPositives) => write_file(&pr_dir.join("micro.csv"), "threshold,recall,precision\n")?,
        Err(e) => return Err(e.into()),
    }
    Ok(())
}

pub fn evaluate(a: EvaluateArgs) -> Result<()> {
    if !(0.0..=1.0).contains(&a.threshold) {
        return Err(config_err("--threshold must lie in [0, 1]"));
    }
    let preds = match &a.scores {
        Some(path) => read_scores(path)?,
        None => {
            let loaded = load_model(&a.model)?;
            let corpus_path = a.corpus.as_ref().ok_or_else(|| config_err("--corpus is required with --checkpoint"))?;
            let corpus = load_corpus_file(corpus_path)?;
            let entries = match a.subset {
                Subset::All => corpus.entries,
                Subset::Eval => {
                    let c = &loaded.model.config;
                    split_dataset(&corpus.entries, c.eval_fraction, c.seed)
                        .map_err(|e| config_err(format!("split: {e}")))?
                        .eval
                }
            };
            if entries.is_empty() {
                return Err(config_err("the evaluation subset is empty; try --subset all"));
            }
            score_entries(&loaded, &entries)?
        }
    };
    prepare_out(&a.out)?;
    write_file(&a.out.join(SCORES_FILE), write_scores(&preds)?)?;

    let prf = prf_at_threshold(&preds, a.threshold)?;
    write_file(&a.out.join("prf.csv"), prf_report_csv(&prf, &a.label))?;
    let prf_text = prf_report_text(&prf, &a.label);
    write_file(&a.out.join("prf.txt"), &prf_text)?;
    let auprc = AuPrcReport::compute(&preds)?;
    write_file(&a.out.join("auprc.csv"), auprc.to_csv(&a.label))?;
    let auprc_text = auprc.to_text(&a.label);
    write_file(&a.out.join("auprc.txt"), &auprc_text)?;
    write_pr_curves(&preds, &a.out)?;
    println!("{prf_text}\n{auprc_text}");
    Ok(())
}

pub fn predict(a: PredictArgs) -> Result<()> {
    if !(0.0..=1.0).contains(&a.threshold) {
        return Err(config_err("--threshold must lie in [0, 1]"));
    }
    let loaded = load_model(&a.model)?;
    let entries: Vec<CorpusEntry> = match (&a.manifest, &a.corpus) {
        (Some(manifest), None) => {
            require_file(manifest, "manifest")?;
            let records = load_unlabeled_manifest(manifest)?;
            let (config, plugins) = pipeline_setup(&a.pipeline, manifest, &records)?;
            let outcomes = build_corpus_outcomes(&records, plugins.recognizers(), &config)?;
            records
                .iter()
                .zip(outcomes)
                .map(|(r, o)| {
                    o.map(|c| CorpusEntry {
                        id: r.id.clone(),
                        labels: r.labels(),
                        text: c.c_sd,
                    })
                })
                .collect::<Result<_, _>>()?
        }
        (None, Some(corpus)) => load_corpus_file(corpus)?.entries,
        _ => return Err(config_err("give exactly one of --manifest or --corpus")),
    };
    let preds = score_entries(&loaded, &entries)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["id"];
    header.extend(GENRES.iter().map(|g| g.name()));
    header.extend(["genres", "empty_corpus"]);
    w.write_record(&header)?;
    for (p, e) in preds.iter().zip(&entries) {
        let mut row = vec![p.trailer_id.clone()];
        row.extend(p.scores.iter().map(|s| s.to_string()));
        let names: Vec<&str> = GENRES
            .iter()
            .zip(p.scores)
            .filter(|(_, s)| *s >= a.threshold)
            .map(|(g, _)| g.name())
            .collect();
        row.push(names.join("|"));
        row.push(e.text.trim().is_empty().to_string());
        w.write_record(&row)?;
    }
    prepare_out(&a.out)?;
    let path = a.out.join(PREDICTIONS_FILE);
    write_file(&path, w.into_inner()?)?;
    println!("{} predictions written to {}", preds.len(), path.display());
    Ok(())
}

pub fn export_pr(a: ExportPrArgs) -> Result<()> {
    let preds = read_scores(&a.scores)?;
    prepare_out(&a.out)?;
    write_pr_curves(&preds, &a.out)?;
    println!("PR curves written to {}", a.out.join("pr").display());
    Ok(())
}
