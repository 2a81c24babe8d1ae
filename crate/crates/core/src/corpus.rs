//! Per-trailer corpus construction and fusion.
//!
//! Each trailer yields up to three normalized text streams: a situation
//! corpus rendered from the best situation of every sampled frame, a
//! dialogue corpus concatenated from chunk transcripts, and a metadata
//! corpus from description, plot and keywords. The fused corpus joins them
//! in dialogue, situation, metadata order by default.

use std::fmt;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::manifest::{DatasetSplit, LabelVector, ManifestError, TrailerRecord};
use crate::media::plugin::{
    validate_situations, validate_transcripts, ProbeRequest, SituationRequest, SpeechRequest,
};
use crate::media::{
    chunk_audio, plan_frames, render_situation, PlanError, PluginError, SilenceParams, Situation,
    SituationRecognizer, SpeechRecognizer, DEFAULT_FRAME_STRIDE, FRAME_HEIGHT, FRAME_WIDTH,
};
use crate::textprep::normalize_text;

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("trailer `{id}`: {source}")]
    Trailer {
        id: String,
        #[source]
        source: Box<FusionError>,
    },
    #[error(transparent)]
    Plugin(#[from] PluginError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error("every fused corpus is empty")]
    AllEmptyCorpus,
    #[error("bad modality list `{0}` (expected letters from S, D, M)")]
    BadModalities(String),
    #[error("corpus line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("trailer id `{0}` cannot contain tabs or newlines")]
    BadId(String),
    #[error("worker pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error("io: {0}")]
    Io(#[from] io::Error),
}

impl FusionError {
    /// The innermost cause, skipping trailer context.
    pub fn root(&self) -> &FusionError {
        match self {
            FusionError::Trailer { source, .. } => source.root(),
            other => other,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Modality {
    Situation,
    Dialogue,
    Metadata,
}

impl Modality {
    pub fn letter(self) -> char {
        match self {
            Modality::Situation => 'S',
            Modality::Dialogue => 'D',
            Modality::Metadata => 'M',
        }
    }

    fn from_letter(c: char) -> Option<Self> {
        match c.to_ascii_uppercase() {
            'S' => Some(Modality::Situation),
            'D' => Some(Modality::Dialogue),
            'M' => Some(Modality::Metadata),
            _ => None,
        }
    }
}

/// Which streams contribute to the fused corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModalityMask {
    pub situation: bool,
    pub dialogue: bool,
    pub metadata: bool,
}

impl ModalityMask {
    pub const ALL: ModalityMask = ModalityMask {
        situation: true,
        dialogue: true,
        metadata: true,
    };
    /// Dialogue plus metadata.
    pub const DIALOGUE_METADATA: ModalityMask = ModalityMask {
        situation: false,
        dialogue: true,
        metadata: true,
    };
    pub const SITUATION_ONLY: ModalityMask = ModalityMask {
        situation: true,
        dialogue: false,
        metadata: false,
    };

    pub fn contains(&self, m: Modality) -> bool {
        match m {
            Modality::Situation => self.situation,
            Modality::Dialogue => self.dialogue,
            Modality::Metadata => self.metadata,
        }
    }

    pub fn is_empty(&self) -> bool {
        !(self.situation || self.dialogue || self.metadata)
    }
}

impl Default for ModalityMask {
    fn default() -> Self {
        ModalityMask::ALL
    }
}

impl fmt::Display for ModalityMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let letters: Vec<String> = [Modality::Situation, Modality::Dialogue, Modality::Metadata]
            .into_iter()
            .filter(|m| self.contains(*m))
            .map(|m| m.letter().to_string())
            .collect();
        f.write_str(&letters.join(","))
    }
}

impl FromStr for ModalityMask {
    type Err = FusionError;

    /// Accepts `S,D,M`, `SDM`, `d,m` and similar.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut mask = ModalityMask {
            situation: false,
            dialogue: false,
            metadata: false,
        };
        for c in s.chars().filter(|c| !matches!(c, ',' | ' ' | '+')) {
            match Modality::from_letter(c) {
                Some(Modality::Situation) => mask.situation = true,
                Some(Modality::Dialogue) => mask.dialogue = true,
                Some(Modality::Metadata) => mask.metadata = true,
                None => return Err(FusionError::BadModalities(s.to_string())),
            }
        }
        if mask.is_empty() {
            return Err(FusionError::BadModalities(s.to_string()));
        }
        Ok(mask)
    }
}

pub const DEFAULT_ORDER: [Modality; 3] = [Modality::Dialogue, Modality::Situation, Modality::Metadata];

/// Parse a fusion order such as `D,S,M`; must name each modality exactly once.
pub fn parse_order(s: &str) -> Result<[Modality; 3], FusionError> {
    let ms: Vec<Modality> = s
        .chars()
        .filter(|c| !matches!(c, ',' | ' '))
        .map(|c| Modality::from_letter(c).ok_or_else(|| FusionError::BadModalities(s.to_string())))
        .collect::<Result<_, _>>()?;
    match ms.as_slice() {
        [a, b, c] if a != b && b != c && a != c => Ok([*a, *b, *c]),
        _ => Err(FusionError::BadModalities(s.to_string())),
    }
}

#[derive(Debug, Clone)]
pub struct FusionConfig {
    pub modalities: ModalityMask,
    pub order: [Modality; 3],
    pub frame_stride: usize,
    pub silence: SilenceParams,
    /// Append verb glosses, when recognizers provide them, to situation sentences.
    pub include_verb_definitions: bool,
    /// Base directory for relative media paths.
    pub media_root: Option<PathBuf>,
    pub workers: usize,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            modalities: ModalityMask::ALL,
            order: DEFAULT_ORDER,
            frame_stride: DEFAULT_FRAME_STRIDE,
            silence: SilenceParams::default(),
            include_verb_definitions: false,
            media_root: None,
            workers: 1,
        }
    }
}

impl FusionConfig {
    fn resolve(&self, p: &Path) -> PathBuf {
        match &self.media_root {
            Some(root) if p.is_relative() => root.join(p),
            _ => p.to_path_buf(),
        }
    }
}

/// The recognizers available to the pipeline; either may be absent when its
/// modality is disabled.
#[derive(Clone, Copy, Default)]
pub struct Recognizers<'a> {
    pub speech: Option<&'a dyn SpeechRecognizer>,
    pub situation: Option<&'a dyn SituationRecognizer>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrailerCorpus {
    pub trailer_id: String,
    pub c_s: String,
    pub c_d: String,
    pub c_m: String,
    pub c_sd: String,
}

impl TrailerCorpus {
    pub fn part(&self, m: Modality) -> &str {
        match m {
            Modality::Situation => &self.c_s,
            Modality::Dialogue => &self.c_d,
            Modality::Metadata => &self.c_m,
        }
    }
}

/// Render each situation and normalize the frame-ordered concatenation.
pub fn build_situation_corpus(situations: &[Situation], include_definitions: bool) -> String {
    let sentences: Vec<String> = situations
        .iter()
        .map(|s| match (&s.definition, include_definitions) {
            (Some(def), true) => format!("{} {def}", render_situation(s)),
            _ => render_situation(s),
        })
        .collect();
    normalize_text(&sentences.join(" "))
}

/// Concatenate chunk transcripts in chunk order, then normalize.
pub fn build_dialogue_corpus<S: AsRef<str>>(transcripts: &[S]) -> String {
    let joined: Vec<&str> = transcripts.iter().map(AsRef::as_ref).collect();
    normalize_text(&joined.join(" "))
}

/// Description, plot and keywords, normalized.
pub fn build_metadata_corpus(record: &TrailerRecord) -> String {
    let mut parts = vec![record.description.as_str(), record.plot.as_str()];
    parts.extend(record.keywords.iter().map(String::as_str));
    normalize_text(&parts.join(" "))
}

/// Dialogue, situation, metadata joined by single spaces; empty parts skipped.
pub fn fuse(c_d: &str, c_s: &str, c_m: &str) -> String {
    fuse_ordered(c_d, c_s, c_m, &DEFAULT_ORDER)
}

pub fn fuse_ordered(c_d: &str, c_s: &str, c_m: &str, order: &[Modality; 3]) -> String {
    order
        .iter()
        .map(|m| match m {
            Modality::Dialogue => c_d,
            Modality::Situation => c_s,
            Modality::Metadata => c_m,
        })
        .filter(|p| !p.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

fn situation_corpus_for(
    record: &TrailerRecord,
    video: &Path,
    recognizer: &dyn SituationRecognizer,
    config: &FusionConfig,
) -> Result<String, FusionError> {
    let media_path = config.resolve(video);
    let probe = recognizer.probe_video(&ProbeRequest {
        trailer_id: record.id.clone(),
        media_path: media_path.clone(),
    })?;
    let plan = plan_frames(&record.id, probe.total_frames, config.frame_stride)?;
    if plan.frame_indices.is_empty() {
        return Ok(String::new());
    }
    let request = SituationRequest {
        trailer_id: record.id.clone(),
        video_path: media_path,
        frame_indices: plan.frame_indices,
        width: FRAME_WIDTH,
        height: FRAME_HEIGHT,
    };
    let response = recognizer.recognize(&request)?;
    let picked: Vec<Situation> = validate_situations(&request, response)?
        .into_iter()
        .map(|(_, s)| s)
        .collect();
    Ok(build_situation_corpus(&picked, config.include_verb_definitions))
}

fn dialogue_corpus_for(
    record: &TrailerRecord,
    audio: &Path,
    recognizer: &dyn SpeechRecognizer,
    config: &FusionConfig,
) -> Result<String, FusionError> {
    let media_path = config.resolve(audio);
    let probe = recognizer.probe_audio(&ProbeRequest {
        trailer_id: record.id.clone(),
        media_path: media_path.clone(),
    })?;
    let chunks = chunk_audio(&probe.envelope, &config.silence)?;
    if chunks.is_empty() {
        // concatenation over zero chunks
        return Ok(String::new());
    }
    let request = SpeechRequest {
        trailer_id: record.id.clone(),
        audio_path: media_path,
        chunks,
    };
    let response = recognizer.transcribe(&request)?;
    let transcripts = validate_transcripts(&request, response)?;
    Ok(build_dialogue_corpus(&transcripts))
}

fn trailer_corpus(
    record: &TrailerRecord,
    recognizers: Recognizers<'_>,
    config: &FusionConfig,
) -> Result<TrailerCorpus, FusionError> {
    let c_s = match (&record.video_path, config.modalities.situation) {
        (Some(video), true) => {
            let r = recognizers
                .situation
                .ok_or(PluginError::NotConfigured("situation"))?;
            situation_corpus_for(record, video, r, config)?
        }
        _ => String::new(),
    };
    let c_d = match (&record.audio_path, config.modalities.dialogue) {
        (Some(audio), true) => {
            let r = recognizers.speech.ok_or(PluginError::NotConfigured("speech"))?;
            dialogue_corpus_for(record, audio, r, config)?
        }
        _ => String::new(),
    };
    let c_m = if config.modalities.metadata {
        build_metadata_corpus(record)
    } else {
        String::new()
    };
    let c_sd = fuse_ordered(&c_d, &c_s, &c_m, &config.order);
    Ok(TrailerCorpus {
        trailer_id: record.id.clone(),
        c_s,
        c_d,
        c_m,
        c_sd,
    })
}

/// Run the extraction pipeline for one trailer. Shared by training and inference.
pub fn prepare_inference_corpus(
    record: &TrailerRecord,
    recognizers: Recognizers<'_>,
    config: &FusionConfig,
) -> Result<TrailerCorpus, FusionError> {
    trailer_corpus(record, recognizers, config).map_err(|e| FusionError::Trailer {
        id: record.id.clone(),
        source: Box::new(e),
    })
}

/// Per-trailer results in input order, computed on `config.workers` threads.
pub fn build_corpus_outcomes(
    records: &[TrailerRecord],
    recognizers: Recognizers<'_>,
    config: &FusionConfig,
) -> Result<Vec<Result<TrailerCorpus, FusionError>>, FusionError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers.max(1))
        .build()
        .map_err(|e| FusionError::Pool(e.to_string()))?;
    Ok(pool.install(|| {
        records
            .par_iter()
            .map(|r| prepare_inference_corpus(r, recognizers, config))
            .collect()
    }))
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CorpusSet {
    pub corpora: Vec<TrailerCorpus>,
    pub labels: Vec<LabelVector>,
}

impl CorpusSet {
    pub fn len(&self) -> usize {
        self.corpora.len()
    }

    pub fn is_empty(&self) -> bool {
        self.corpora.is_empty()
    }

    pub fn entries(&self) -> Vec<CorpusEntry> {
        self.corpora
            .iter()
            .zip(&self.labels)
            .map(|(c, l)| CorpusEntry {
                id: c.trailer_id.clone(),
                labels: *l,
                text: c.c_sd.clone(),
            })
            .collect()
    }
}

/// Build corpora for all records, failing on the first trailer error.
pub fn build_corpus_set(
    records: &[TrailerRecord],
    recognizers: Recognizers<'_>,
    config: &FusionConfig,
) -> Result<CorpusSet, FusionError> {
    let mut set = CorpusSet::default();
    for (record, outcome) in records.iter().zip(build_corpus_outcomes(records, recognizers, config)?) {
        set.corpora.push(outcome?);
        set.labels.push(record.labels());
    }
    if set.corpora.iter().all(|c| c.c_sd.is_empty()) {
        return Err(FusionError::AllEmptyCorpus);
    }
    Ok(set)
}

/// One corpus per training record, labels aligned.
pub fn build_training_corpus(
    split: &DatasetSplit<TrailerRecord>,
    recognizers: Recognizers<'_>,
    config: &FusionConfig,
) -> Result<CorpusSet, FusionError> {
    build_corpus_set(&split.train, recognizers, config)
}

/// One serialized corpus line: id, label bits and fused text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusEntry {
    pub id: String,
    pub labels: LabelVector,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusHeader {
    pub modalities: ModalityMask,
    pub order: [Modality; 3],
}

impl Default for CorpusHeader {
    fn default() -> Self {
        CorpusHeader {
            modalities: ModalityMask::ALL,
            order: DEFAULT_ORDER,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CorpusFile {
    pub header: CorpusHeader,
    pub entries: Vec<CorpusEntry>,
}

const CORPUS_MAGIC: &str = "# genreflow-corpus v1";

fn order_string(order: &[Modality; 3]) -> String {
    order.iter().map(|m| m.letter().to_string()).collect::<Vec<_>>().join(",")
}

/// `id<TAB>label_bits<TAB>c_sd` per line after a one-line `#` header.
pub fn write_corpus<W: io::Write>(
    mut w: W,
    header: &CorpusHeader,
    entries: &[CorpusEntry],
) -> Result<(), FusionError> {
    writeln!(
        w,
        "{CORPUS_MAGIC} modalities={} order={}",
        header.modalities,
        order_string(&header.order)
    )?;
    for e in entries {
        if e.id.contains(['\t', '\n', '\r']) {
            return Err(FusionError::BadId(e.id.clone()));
        }
        writeln!(w, "{}\t{}\t{}", e.id, e.labels.to_bits(), e.text)?;
    }
    Ok(())
}

pub fn read_corpus(text: &str) -> Result<CorpusFile, FusionError> {
    let mut file = CorpusFile::default();
    for (n, line) in text.lines().enumerate() {
        let lineno = n + 1;
        if let Some(rest) = line.strip_prefix('#') {
            for kv in rest.split_whitespace() {
                if let Some(v) = kv.strip_prefix("modalities=") {
                    file.header.modalities = v.parse()?;
                } else if let Some(v) = kv.strip_prefix("order=") {
                    file.header.order = parse_order(v)?;
                }
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let mut cols = line.splitn(3, '\t');
        let (id, bits, body) = match (cols.next(), cols.next(), cols.next()) {
            (Some(i), Some(b), Some(t)) => (i, b, t),
            _ => {
                return Err(FusionError::Parse {
                    line: lineno,
                    reason: "expected id<TAB>label_bits<TAB>text".into(),
                })
            }
        };
        let labels = LabelVector::from_bits(bits).map_err(|e| FusionError::Parse {
            line: lineno,
            reason: e.to_string(),
        })?;
        file.entries.push(CorpusEntry {
            id: id.to_string(),
            labels,
            text: body.to_string(),
        });
    }
    Ok(file)
}

pub fn load_corpus(path: &Path) -> Result<CorpusFile, FusionError> {
    read_corpus(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::Genre;
    use crate::media::plugin::{
        AudioProbe, FrameSituations, SituationResponse, SpeechResponse, VideoProbe,
    };
    use crate::media::Role;
    use proptest::prelude::*;

    struct Canned {
        frames: usize,
        answers: Vec<(usize, Situation)>,
        envelope: Vec<f64>,
        transcripts: Vec<String>,
    }

    impl SituationRecognizer for Canned {
        fn probe_video(&self, _: &ProbeRequest) -> Result<VideoProbe, PluginError> {
            Ok(VideoProbe { total_frames: self.frames })
        }
        fn recognize(&self, req: &SituationRequest) -> Result<SituationResponse, PluginError> {
            Ok(SituationResponse {
                frames: self
                    .answers
                    .iter()
                    .filter(|(i, _)| req.frame_indices.contains(i))
                    .map(|(i, s)| FrameSituations { index: *i, candidates: vec![s.clone()] })
                    .collect(),
            })
        }
    }

    impl SpeechRecognizer for Canned {
        fn probe_audio(&self, _: &ProbeRequest) -> Result<AudioProbe, PluginError> {
            Ok(AudioProbe { envelope: self.envelope.clone() })
        }
        fn transcribe(&self, req: &SpeechRequest) -> Result<SpeechResponse, PluginError> {
            Ok(SpeechResponse { transcripts: self.transcripts.iter().take(req.chunks.len()).cloned().collect() })
        }
    }

    fn canned() -> Canned {
        let mut envelope = vec![0.5; 1000];
        envelope.extend(vec![0.0; 500]);
        envelope.extend(vec![0.5; 500]);
        Canned {
            frames: 15,
            answers: vec![
                (1, Situation::new("sprints", &[(Role::Agent, "man"), (Role::Place, "racetrack")], -1.0)),
                (11, Situation::new("marches", &[(Role::Agent, "soldiers"), (Role::Place, "outdoor")], -1.0)),
            ],
            envelope,
            transcripts: vec!["Hello there.".into(), "RUN!".into()],
        }
    }

    fn full_record() -> TrailerRecord {
        let mut r = TrailerRecord::empty("t1");
        r.video_path = Some("v.json".into());
        r.audio_path = Some("a.json".into());
        r.description = "A hero rises".into();
        r.genres = vec![Genre::Action];
        r
    }

    #[test]
    fn situation_corpus_examples() {
        assert_eq!(build_situation_corpus(&[], false), "");
        let a = Situation::new("sprints", &[(Role::Agent, "man"), (Role::Place, "racetrack")], 0.0);
        let b = Situation::new("marches", &[(Role::Agent, "soldiers"), (Role::Place, "outdoor")], 0.0);
        assert_eq!(
            build_situation_corpus(&[a.clone(), b], false),
            "man sprints racetrack soldiers marches outdoor"
        );
        assert_eq!(build_situation_corpus(std::slice::from_ref(&a), false), "man sprints racetrack");
        let mut with_def = a;
        with_def.definition = Some("to run at full speed".into());
        assert_eq!(build_situation_corpus(&[with_def.clone()], false), "man sprints racetrack");
        assert_eq!(build_situation_corpus(&[with_def], true), "man sprints racetrack run full speed");
    }

    #[test]
    fn dialogue_corpus_examples() {
        assert_eq!(build_dialogue_corpus(&["Hello there.", "RUN!"]), "hello run");
        assert_eq!(build_dialogue_corpus::<&str>(&[]), "");
        assert_eq!(build_dialogue_corpus(&["42"]), "");
    }

    #[test]
    fn metadata_corpus_examples() {
        let mut r = TrailerRecord::empty("x");
        r.description = "A hero rises".into();
        assert_eq!(build_metadata_corpus(&r), "hero rises");
        assert_eq!(build_metadata_corpus(&TrailerRecord::empty("y")), "");
        let mut r = TrailerRecord::empty("z");
        r.keywords = vec!["space".into(), "war".into()];
        assert_eq!(build_metadata_corpus(&r), "space war");
    }

    #[test]
    fn fuse_examples() {
        assert_eq!(fuse("a", "b", "c"), "a b c");
        assert_eq!(fuse("", "b", ""), "b");
        assert_eq!(fuse("", "", ""), "");
        let order = parse_order("S,D,M").unwrap();
        assert_eq!(fuse_ordered("d", "s", "m", &order), "s d m");
        assert!(parse_order("S,S,M").is_err());
    }

    #[test]
    fn full_pipeline_for_one_trailer() {
        let c = canned();
        let rec = Recognizers { speech: Some(&c), situation: Some(&c) };
        let tc = prepare_inference_corpus(&full_record(), rec, &FusionConfig::default()).unwrap();
        assert_eq!(tc.c_d, "hello run");
        assert_eq!(tc.c_s, "man sprints racetrack soldiers marches outdoor");
        assert_eq!(tc.c_m, "hero rises");
        assert_eq!(tc.c_sd, "hello run man sprints racetrack soldiers marches outdoor hero rises");
    }

    #[test]
    fn missing_audio_or_disabled_modality() {
        let c = canned();
        let rec = Recognizers { speech: Some(&c), situation: Some(&c) };
        let mut r = full_record();
        r.audio_path = None;
        let tc = prepare_inference_corpus(&r, rec, &FusionConfig::default()).unwrap();
        assert_eq!(tc.c_d, "");
        assert_eq!(tc.c_sd, fuse("", &tc.c_s, &tc.c_m));

        let cfg = FusionConfig { modalities: ModalityMask::DIALOGUE_METADATA, ..Default::default() };
        let tc = prepare_inference_corpus(&full_record(), Recognizers { speech: Some(&c), situation: None }, &cfg).unwrap();
        assert_eq!(tc.c_s, "");
        assert_eq!(tc.c_sd, "hello run hero rises");
    }

    #[test]
    fn metadata_only_and_empty_records() {
        let mut r = TrailerRecord::empty("m");
        r.plot = "Aliens invade".into();
        let tc = prepare_inference_corpus(&r, Recognizers::default(), &FusionConfig::default()).unwrap();
        assert_eq!(tc.c_sd, tc.c_m);
        let tc = prepare_inference_corpus(&TrailerRecord::empty("e"), Recognizers::default(), &FusionConfig::default()).unwrap();
        assert_eq!(tc.c_sd, "");
    }

    #[test]
    fn missing_frame_names_the_trailer() {
        let mut c = canned();
        c.frames = 25; // asks for frame 21, which has no answer
        let rec = Recognizers { speech: Some(&c), situation: Some(&c) };
        let err = prepare_inference_corpus(&full_record(), rec, &FusionConfig::default()).unwrap_err();
        assert!(err.to_string().contains("t1"), "{err}");
        assert!(matches!(err.root(), FusionError::Plugin(PluginError::MissingEntry { index: 21, .. })));
    }

    #[test]
    fn unconfigured_recognizer_is_an_error() {
        let err = prepare_inference_corpus(&full_record(), Recognizers::default(), &FusionConfig::default()).unwrap_err();
        assert!(matches!(err.root(), FusionError::Plugin(PluginError::NotConfigured(_))));
    }

    #[test]
    fn corpus_set_is_deterministic_and_ordered() {
        let c = canned();
        let rec = Recognizers { speech: Some(&c), situation: Some(&c) };
        let records: Vec<_> = (0..8)
            .map(|i| {
                let mut r = full_record();
                r.id = format!("t{i}");
                r
            })
            .collect();
        let cfg = FusionConfig { workers: 4, ..Default::default() };
        let a = build_corpus_set(&records, rec, &cfg).unwrap();
        let b = build_corpus_set(&records, rec, &FusionConfig::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.corpora.iter().map(|c| c.trailer_id.as_str()).collect::<Vec<_>>(),
                   records.iter().map(|r| r.id.as_str()).collect::<Vec<_>>());
        let mut bytes_a = Vec::new();
        let mut bytes_b = Vec::new();
        write_corpus(&mut bytes_a, &CorpusHeader::default(), &a.entries()).unwrap();
        write_corpus(&mut bytes_b, &CorpusHeader::default(), &b.entries()).unwrap();
        assert_eq!(bytes_a, bytes_b);
    }

    #[test]
    fn all_empty_is_rejected() {
        let records = vec![TrailerRecord::empty("a"), TrailerRecord::empty("b")];
        assert!(matches!(
            build_corpus_set(&records, Recognizers::default(), &FusionConfig::default()),
            Err(FusionError::AllEmptyCorpus)
        ));
    }

    #[test]
    fn corpus_file_round_trip() {
        let header = CorpusHeader { modalities: ModalityMask::DIALOGUE_METADATA, order: DEFAULT_ORDER };
        let entries = vec![
            CorpusEntry { id: "a".into(), labels: LabelVector([true, false, false, false, true]), text: "x y".into() },
            CorpusEntry { id: "b".into(), labels: LabelVector([false, true, false, false, false]), text: "".into() },
        ];
        let mut buf = Vec::new();
        write_corpus(&mut buf, &header, &entries).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("a\t10001\tx y\n"));
        let back = read_corpus(&text).unwrap();
        assert_eq!(back.header, header);
        assert_eq!(back.entries, entries);
        assert!(read_corpus("a\t101\tx\n").is_err());
        let bad = vec![CorpusEntry { id: "a\tb".into(), labels: LabelVector::default(), text: String::new() }];
        assert!(write_corpus(Vec::new(), &header, &bad).is_err());
    }

    #[test]
    fn modality_mask_parsing() {
        assert_eq!("D,M".parse::<ModalityMask>().unwrap(), ModalityMask::DIALOGUE_METADATA);
        assert_eq!("sdm".parse::<ModalityMask>().unwrap(), ModalityMask::ALL);
        assert_eq!(ModalityMask::ALL.to_string(), "S,D,M");
        assert!("".parse::<ModalityMask>().is_err());
        assert!("X".parse::<ModalityMask>().is_err());
    }

    proptest! {
        #[test]
        fn fused_stream_has_prefix_and_suffix_structure(
            d in "[a-z]{0,6}( [a-z]{1,6}){0,3}",
            s in "[a-z]{0,6}( [a-z]{1,6}){0,3}",
            m in "[a-z]{0,6}( [a-z]{1,6}){0,3}",
        ) {
            let fused = fuse(&d, &s, &m);
            let toks: Vec<&str> = fused.split_whitespace().collect();
            let (td, ts, tm): (Vec<&str>, Vec<&str>, Vec<&str>) = (
                d.split_whitespace().collect(), s.split_whitespace().collect(), m.split_whitespace().collect());
            prop_assert_eq!(&toks[..td.len()], &td[..]);
            prop_assert_eq!(&toks[toks.len() - tm.len()..], &tm[..]);
            prop_assert_eq!(&toks[td.len()..td.len() + ts.len()], &ts[..]);
        }

        #[test]
        fn dropping_a_modality_keeps_the_others(drop in 0usize..3) {
            let c = canned();
            let rec = Recognizers { speech: Some(&c), situation: Some(&c) };
            let full = prepare_inference_corpus(&full_record(), rec, &FusionConfig::default()).unwrap();
            let mut mask = ModalityMask::ALL;
            match drop { 0 => mask.situation = false, 1 => mask.dialogue = false, _ => mask.metadata = false }
            let cfg = FusionConfig { modalities: mask, ..Default::default() };
            let part = prepare_inference_corpus(&full_record(), rec, &cfg).unwrap();
            for m in [Modality::Situation, Modality::Dialogue, Modality::Metadata] {
                if mask.contains(m) {
                    prop_assert_eq!(part.part(m), full.part(m));
                } else {
                    prop_assert_eq!(part.part(m), "");
                }
            }
        }
    }
}
