//! File-based exchange with external recognizers.
//!
//! A plugin is an executable invoked as
//!
//! ```text
//! <program> [extra args...] <speech|situation> <probe|recognize> <request.json> <response.json>
//! ```
//!
//! It reads the request document, writes the response document, and exits 0.
//! `probe` asks for media facts the planners need (frame count, or a
//! per-millisecond RMS envelope); `recognize` asks for transcripts or
//! situation candidates for the planned chunks or frames.

use std::collections::HashSet;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{select_situation, AudioChunk, Situation};

pub const TIMEOUT_ENV: &str = "GENREFLOW_PLUGIN_TIMEOUT_MS";
pub const DEFAULT_TIMEOUT_MS: u64 = 120_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PluginKind {
    Speech,
    Situation,
}

impl PluginKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PluginKind::Speech => "speech",
            PluginKind::Situation => "situation",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Probe,
    Recognize,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Probe => "probe",
            Stage::Recognize => "recognize",
        }
    }
}

#[derive(Debug, Error)]
pub enum PluginError {
    #[error("{program}: no response within {after_ms} ms")]
    Timeout { program: String, after_ms: u64 },
    #[error("malformed {kind} response: {reason}")]
    MalformedResponse { kind: &'static str, reason: String },
    #[error("{kind} response has no entry for {what} {index}")]
    MissingEntry {
        kind: &'static str,
        what: &'static str,
        index: usize,
    },
    #[error("{program} exited with {status}: {stderr}")]
    Failed {
        program: String,
        status: String,
        stderr: String,
    },
    #[error("cannot run {program}: {source}")]
    Spawn {
        program: String,
        source: std::io::Error,
    },
    #[error("no {0} plugin configured")]
    NotConfigured(&'static str),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl PluginError {
    fn malformed(kind: PluginKind, reason: impl Into<String>) -> Self {
        PluginError::MalformedResponse {
            kind: kind.as_str(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRequest {
    pub trailer_id: String,
    pub media_path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoProbe {
    pub total_frames: usize,
}

/// Per-millisecond RMS level, full scale = 1.0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudioProbe {
    pub envelope: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeechRequest {
    pub trailer_id: String,
    pub audio_path: PathBuf,
    pub chunks: Vec<AudioChunk>,
}

/// One transcript per requested chunk, aligned by position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeechResponse {
    pub transcripts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SituationRequest {
    pub trailer_id: String,
    pub video_path: PathBuf,
    pub frame_indices: Vec<usize>,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameSituations {
    pub index: usize,
    pub candidates: Vec<Situation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SituationResponse {
    pub frames: Vec<FrameSituations>,
}

pub trait SpeechRecognizer: Send + Sync {
    fn probe_audio(&self, request: &ProbeRequest) -> Result<AudioProbe, PluginError>;
    fn transcribe(&self, request: &SpeechRequest) -> Result<SpeechResponse, PluginError>;
}

pub trait SituationRecognizer: Send + Sync {
    fn probe_video(&self, request: &ProbeRequest) -> Result<VideoProbe, PluginError>;
    fn recognize(&self, request: &SituationRequest) -> Result<SituationResponse, PluginError>;
}

/// Check a speech response against its request; transcripts come back in chunk order.
pub fn validate_transcripts(
    request: &SpeechRequest,
    response: SpeechResponse,
) -> Result<Vec<String>, PluginError> {
    let (want, got) = (request.chunks.len(), response.transcripts.len());
    if got < want {
        return Err(PluginError::MissingEntry {
            kind: "speech",
            what: "chunk",
            index: got,
        });
    }
    if got > want {
        return Err(PluginError::malformed(
            PluginKind::Speech,
            format!("{got} transcripts for {want} chunks"),
        ));
    }
    Ok(response.transcripts)
}

/// Check a situation response against its request and pick the best
/// candidate per frame, in requested frame order.
pub fn validate_situations(
    request: &SituationRequest,
    response: SituationResponse,
) -> Result<Vec<(usize, Situation)>, PluginError> {
    let kind = PluginKind::Situation;
    let requested: HashSet<usize> = request.frame_indices.iter().copied().collect();
    let mut by_index = std::collections::HashMap::new();
    for frame in response.frames {
        if !requested.contains(&frame.index) {
            return Err(PluginError::malformed(kind, format!("unrequested frame {}", frame.index)));
        }
        for c in &frame.candidates {
            c.validate().map_err(|r| PluginError::malformed(kind, format!("frame {}: {r}", frame.index)))?;
        }
        let index = frame.index;
        if by_index.insert(index, frame.candidates).is_some() {
            return Err(PluginError::malformed(kind, format!("frame {index} listed twice")));
        }
    }
    request
        .frame_indices
        .iter()
        .map(|&i| {
            let cands = by_index.get(&i).ok_or(PluginError::MissingEntry {
                kind: "situation",
                what: "frame",
                index: i,
            })?;
            let best = select_situation(cands)
                .map_err(|_| PluginError::malformed(kind, format!("frame {i} has no candidates")))?;
            Ok((i, best.clone()))
        })
        .collect()
}

/// An external recognizer executable speaking the file exchange protocol.
#[derive(Debug, Clone)]
pub struct ExternalPlugin {
    pub program: PathBuf,
    pub args: Vec<String>,
    pub timeout: Duration,
}

impl ExternalPlugin {
    /// Timeout comes from `GENREFLOW_PLUGIN_TIMEOUT_MS` when set.
    pub fn new(program: impl Into<PathBuf>) -> Self {
        let ms = std::env::var(TIMEOUT_ENV)
            .ok()
            .and_then(|v| v.trim().parse().ok())
            .unwrap_or(DEFAULT_TIMEOUT_MS);
        ExternalPlugin {
            program: program.into(),
            args: Vec::new(),
            timeout: Duration::from_millis(ms),
        }
    }

    pub fn with_args(mut self, args: Vec<String>) -> Self {
        self.args = args;
        self
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    fn name(&self) -> String {
        self.program.display().to_string()
    }

    /// Run one exchange over existing request/response paths.
    pub fn run_plugin(
        &self,
        kind: PluginKind,
        stage: Stage,
        request_path: &Path,
        response_path: &Path,
    ) -> Result<(), PluginError> {
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .arg(kind.as_str())
            .arg(stage.as_str())
            .arg(request_path)
            .arg(response_path)
            .stdin(Stdio::null())
            .stdout(Stdio::null())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|source| PluginError::Spawn {
                program: self.name(),
                source,
            })?;
        let deadline = Instant::now() + self.timeout;
        let mut pause = Duration::from_millis(1);
        let status = loop {
            if let Some(status) = child.try_wait()? {
                break status;
            }
            if Instant::now() >= deadline {
                let _ = child.kill();
                let _ = child.wait();
                return Err(PluginError::Timeout {
                    program: self.name(),
                    after_ms: self.timeout.as_millis() as u64,
                });
            }
            std::thread::sleep(pause);
            pause = (pause * 2).min(Duration::from_millis(25));
        };
        if !status.success() {
            let mut stderr = String::new();
            if let Some(mut e) = child.stderr.take() {
                let _ = e.read_to_string(&mut stderr);
            }
            return Err(PluginError::Failed {
                program: self.name(),
                status: status.to_string(),
                stderr: stderr.trim().to_string(),
            });
        }
        Ok(())
    }

    fn exchange<Q: Serialize, R: DeserializeOwned>(
        &self,
        kind: PluginKind,
        stage: Stage,
        request: &Q,
    ) -> Result<R, PluginError> {
        let dir = tempfile::Builder::new().prefix("genreflow-plugin-").tempdir()?;
        let req = dir.path().join("request.json");
        let resp = dir.path().join("response.json");
        let body = serde_json::to_vec(request).map_err(|e| PluginError::malformed(kind, e.to_string()))?;
        std::fs::write(&req, body)?;
        self.run_plugin(kind, stage, &req, &resp)?;
        let bytes = std::fs::read(&resp)
            .map_err(|e| PluginError::malformed(kind, format!("response file unreadable: {e}")))?;
        serde_json::from_slice(&bytes).map_err(|e| PluginError::malformed(kind, e.to_string()))
    }
}

impl SpeechRecognizer for ExternalPlugin {
    fn probe_audio(&self, request: &ProbeRequest) -> Result<AudioProbe, PluginError> {
        self.exchange(PluginKind::Speech, Stage::Probe, request)
    }

    fn transcribe(&self, request: &SpeechRequest) -> Result<SpeechResponse, PluginError> {
        self.exchange(PluginKind::Speech, Stage::Recognize, request)
    }
}

impl SituationRecognizer for ExternalPlugin {
    fn probe_video(&self, request: &ProbeRequest) -> Result<VideoProbe, PluginError> {
        self.exchange(PluginKind::Situation, Stage::Probe, request)
    }

    fn recognize(&self, request: &SituationRequest) -> Result<SituationResponse, PluginError> {
        self.exchange(PluginKind::Situation, Stage::Recognize, request)
    }
}
